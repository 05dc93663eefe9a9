#include "isosr/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "isosr/fsrcnn.hpp"
#include "isosr/srunet.hpp"

namespace isosr {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

i64 parse_i64(const std::string& tok, const std::string& path) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(path + ": bad integer '" + tok + "'");
  }
}

double parse_double(const std::string& tok, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(path + ": bad number '" + tok + "'");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");

  out << "ISOSR1\n";
  out << "arch " << c.arch << "\n";
  for (const auto& [k, v] : c.fields) out << "field " << k << " " << v << "\n";
  out << "iteration " << c.iteration << "\n";
  out << "alpha_init " << fmt_double(c.sched.alpha_init) << "\n";
  out << "decay_steps " << c.sched.decay_steps << "\n";
  out << "beta1 " << fmt_double(c.beta1) << "\n";
  out << "beta2 " << fmt_double(c.beta2) << "\n";
  out << "eps " << fmt_double(c.eps) << "\n";
  out << "adam_t " << c.adam_t << "\n";
  i64 offset = 0;
  for (const auto& [name, t] : c.tensors) {
    out << "tensor " << name << " f32 " << t.shape().size();
    for (const i64 d : t.shape()) out << " " << d;
    out << " " << offset << "\n";
    offset += t.numel() * 4;
  }
  out << "data\n";
  for (const auto& [name, t] : c.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()), t.numel() * 4);
  }
  out.flush();
  if (!out) throw DataError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");

  std::string line;
  if (!std::getline(in, line) || line != "ISOSR1") {
    throw DataError(path + ": not an ISOSR1 checkpoint");
  }

  Checkpoint c;
  struct Entry {
    std::string name;
    Shape shape;
    i64 offset;
  };
  std::vector<Entry> dir;
  for (;;) {
    if (!std::getline(in, line)) throw DataError(path + ": truncated header");
    if (line == "data") break;
    std::istringstream iss(line);
    std::string key;
    iss >> key;
    if (key == "arch") {
      iss >> c.arch;
    } else if (key == "field") {
      std::string k, v;
      iss >> k >> v;
      if (k.empty() || v.empty()) throw DataError(path + ": bad field line '" + line + "'");
      c.fields.emplace_back(k, v);
    } else if (key == "iteration") {
      std::string v;
      iss >> v;
      c.iteration = parse_i64(v, path);
    } else if (key == "alpha_init") {
      std::string v;
      iss >> v;
      c.sched.alpha_init = parse_double(v, path);
    } else if (key == "decay_steps") {
      std::string v;
      iss >> v;
      c.sched.decay_steps = parse_i64(v, path);
    } else if (key == "beta1") {
      std::string v;
      iss >> v;
      c.beta1 = parse_double(v, path);
    } else if (key == "beta2") {
      std::string v;
      iss >> v;
      c.beta2 = parse_double(v, path);
    } else if (key == "eps") {
      std::string v;
      iss >> v;
      c.eps = parse_double(v, path);
    } else if (key == "adam_t") {
      std::string v;
      iss >> v;
      c.adam_t = parse_i64(v, path);
    } else if (key == "tensor") {
      Entry e;
      std::string dtype, rank_tok;
      iss >> e.name >> dtype >> rank_tok;
      if (dtype != "f32") throw DataError(path + ": unsupported tensor dtype '" + dtype + "'");
      const i64 rank = parse_i64(rank_tok, path);
      if (rank < 1 || rank > 8) throw DataError(path + ": bad tensor rank " + rank_tok);
      for (i64 i = 0; i < rank; ++i) {
        std::string d;
        iss >> d;
        e.shape.push_back(parse_i64(d, path));
      }
      std::string off;
      iss >> off;
      e.offset = parse_i64(off, path);
      if (!iss) throw DataError(path + ": bad tensor line '" + line + "'");
      dir.push_back(std::move(e));
    } else {
      throw DataError(path + ": unknown header key '" + key + "'");
    }
  }
  if (c.arch.empty()) throw DataError(path + ": missing arch");

  const std::streampos payload_start = in.tellg();
  for (const Entry& e : dir) {
    Tensor<float> t(e.shape);
    in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(t.data()), t.numel() * 4);
    if (in.gcount() != t.numel() * 4) {
      throw DataError(path + ": truncated payload for tensor '" + e.name + "'");
    }
    c.tensors.emplace_back(e.name, std::move(t));
  }
  return c;
}

Checkpoint make_checkpoint(const NetworkDesc& desc, const std::vector<Tensor<float>>& params,
                           const AdamState<float>& adam, const LrSchedule& sched, i64 iteration) {
  if (params.size() != desc.params.size() || adam.m.size() != params.size()) {
    throw ShapeError("make_checkpoint: parameter/state count mismatch");
  }
  Checkpoint c;
  c.arch = desc.arch;
  c.fields = desc.spec_fields;
  c.iteration = iteration;
  c.sched = sched;
  c.beta1 = adam.beta1;
  c.beta2 = adam.beta2;
  c.eps = adam.eps;
  c.adam_t = adam.t;
  for (std::size_t p = 0; p < params.size(); ++p) {
    c.tensors.emplace_back(desc.params[p].name, params[p]);
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    c.tensors.emplace_back("adam_m/" + desc.params[p].name, adam.m[p]);
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    c.tensors.emplace_back("adam_v/" + desc.params[p].name, adam.v[p]);
  }
  return c;
}

NetworkDesc desc_from_checkpoint(const Checkpoint& c) {
  std::map<std::string, std::string> f(c.fields.begin(), c.fields.end());
  auto geti = [&](const char* k) {
    auto it = f.find(k);
    if (it == f.end()) throw DataError(std::string("checkpoint missing field '") + k + "'");
    return parse_i64(it->second, "checkpoint");
  };
  auto gets = [&](const char* k, const char* dflt) {
    auto it = f.find(k);
    return it == f.end() ? std::string(dflt) : it->second;
  };
  if (c.arch == "fsrcnn3d") {
    FsrcnnSpec s;
    s.m = static_cast<int>(geti("m"));
    s.d = static_cast<int>(geti("d"));
    s.s = static_cast<int>(geti("s"));
    s.z_factor = static_cast<int>(geti("z_factor"));
    s.relu = gets("activation", "prelu") == "relu";
    return build_fsrcnn3d(s);
  }
  if (c.arch == "srunet3d") {
    SrunetSpec s;
    s.h = static_cast<int>(geti("h"));
    s.w = static_cast<int>(geti("w"));
    s.d = static_cast<int>(geti("d"));
    s.z_factor = static_cast<int>(geti("z_factor"));
    s.channel_mode = gets("channel_mode", "paper") == "double" ? ChannelMode::kDouble : ChannelMode::kPaper;
    s.skip_kernel_lateral = static_cast<int>(geti("skip_kernel_lateral"));
    s.skip_position = gets("skip_deconv_position", "after_convs") == "before_convs"
                          ? SkipDeconvPosition::kBeforeConvs
                          : SkipDeconvPosition::kAfterConvs;
    return build_srunet3d(s);
  }
  throw DataError("checkpoint has unknown arch '" + c.arch + "'");
}

BoundState bind_checkpoint(const Checkpoint& c, const NetworkDesc& desc) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : c.tensors) by_name[name] = &t;

  auto fetch = [&](const std::string& name, const Shape& want) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint missing tensor '" + name + "'");
    if (it->second->shape() != want) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second->shape()) +
                      ", expected " + shape_str(want));
    }
    return *it->second;
  };

  BoundState b;
  b.iteration = c.iteration;
  b.sched = c.sched;
  b.adam.beta1 = c.beta1;
  b.adam.beta2 = c.beta2;
  b.adam.eps = c.eps;
  b.adam.t = c.adam_t;
  for (const ParamDef& pd : desc.params) {
    b.params.push_back(fetch(pd.name, pd.shape));
    b.adam.m.push_back(fetch("adam_m/" + pd.name, pd.shape));
    b.adam.v.push_back(fetch("adam_v/" + pd.name, pd.shape));
  }
  return b;
}

}  // namespace isosr
