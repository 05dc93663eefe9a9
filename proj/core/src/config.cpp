#include "isosr/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace isosr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

i64 to_i64(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw UsageError(where + ": expected integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw UsageError(where + ": expected number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError(where + ": expected true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v, const std::string& where) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(static_cast<int>(to_i64(tok, where)));
  }
  if (out.empty()) throw UsageError(where + ": empty list");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

void apply_key(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  const std::string where = "[" + section + "] " + key;
  if (section == "model") {
    if (key == "arch") {
      if (value != "fsrcnn3d" && value != "srunet3d") throw UsageError(where + ": unknown arch '" + value + "'");
      c.arch = value;
    } else if (key == "z_factor") {
      c.z_factor = static_cast<int>(to_i64(value, where));
    } else {
      throw UsageError(where + ": unknown key");
    }
  } else if (section == "fsrcnn") {
    if (key == "m") c.fsrcnn.m = static_cast<int>(to_i64(value, where));
    else if (key == "d") c.fsrcnn.d = static_cast<int>(to_i64(value, where));
    else if (key == "s") c.fsrcnn.s = static_cast<int>(to_i64(value, where));
    else if (key == "activation") {
      if (value == "relu") c.fsrcnn.relu = true;
      else if (value == "prelu") c.fsrcnn.relu = false;
      else throw UsageError(where + ": expected prelu|relu");
    } else throw UsageError(where + ": unknown key");
  } else if (section == "srunet") {
    if (key == "h") c.srunet.h = static_cast<int>(to_i64(value, where));
    else if (key == "w") c.srunet.w = static_cast<int>(to_i64(value, where));
    else if (key == "d") c.srunet.d = static_cast<int>(to_i64(value, where));
    else if (key == "channel_mode") {
      if (value == "paper") c.srunet.channel_mode = ChannelMode::kPaper;
      else if (value == "double") c.srunet.channel_mode = ChannelMode::kDouble;
      else throw UsageError(where + ": expected paper|double");
    } else if (key == "skip_kernel_lateral") {
      c.srunet.skip_kernel_lateral = static_cast<int>(to_i64(value, where));
    } else if (key == "skip_deconv_position") {
      if (value == "after_convs") c.srunet.skip_position = SkipDeconvPosition::kAfterConvs;
      else if (value == "before_convs") c.srunet.skip_position = SkipDeconvPosition::kBeforeConvs;
      else throw UsageError(where + ": expected after_convs|before_convs");
    } else throw UsageError(where + ": unknown key");
  } else if (section == "train") {
    if (key == "batch") c.batch = to_i64(value, where);
    else if (key == "iterations") c.iterations = to_i64(value, where);
    else if (key == "alpha_init") c.alpha_init = to_double(value, where);
    else if (key == "decay_steps") c.decay_steps = to_i64(value, where);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_i64(value, where));
    else if (key == "checkpoint_every") c.checkpoint_every = to_i64(value, where);
    else if (key == "val_every") c.val_every = to_i64(value, where);
    else if (key == "fixed_patch") c.fixed_patch = to_bool(value, where);
    else if (key == "out_dir") c.out_dir = value;
    else throw UsageError(where + ": unknown key");
  } else if (section == "data") {
    if (key == "volume") c.volume_path = value;
    else if (key == "train_frac") c.split.train_frac = to_double(value, where);
    else if (key == "val_frac") c.split.val_frac = to_double(value, where);
    else if (key == "test_frac") c.split.test_frac = to_double(value, where);
    else if (key == "split_axis") {
      if (value == "auto") c.split.axis = SplitAxis::kAuto;
      else if (value == "x") c.split.axis = SplitAxis::kX;
      else if (value == "y") c.split.axis = SplitAxis::kY;
      else if (value == "z") c.split.axis = SplitAxis::kZ;
      else throw UsageError(where + ": expected auto|x|y|z");
    } else if (key == "patch_x") c.patch[0] = to_i64(value, where);
    else if (key == "patch_y") c.patch[1] = to_i64(value, where);
    else if (key == "patch_z") c.patch[2] = to_i64(value, where);
    else if (key == "margin") c.margin = to_i64(value, where);
    else throw UsageError(where + ": unknown key");
  } else if (section == "eval") {
    if (key == "border") c.tile.border = to_i64(value, where);
    else if (key == "tile_x") c.tile.tile[0] = to_i64(value, where);
    else if (key == "tile_y") c.tile.tile[1] = to_i64(value, where);
    else if (key == "tile_z") c.tile.tile[2] = to_i64(value, where);
    else if (key == "cubic") {
      if (value == "z") c.cubic = CubicMode::kZOnly;
      else if (value == "tricubic") c.cubic = CubicMode::kTricubic;
      else throw UsageError(where + ": expected z|tricubic");
    } else if (key == "range") c.range = to_double(value, where);
    else throw UsageError(where + ": unknown key");
  } else if (section == "grid") {
    if (key == "m") c.grid.m = to_int_list(value, where);
    else if (key == "d") c.grid.d = to_int_list(value, where);
    else if (key == "s") c.grid.s = to_int_list(value, where);
    else if (key == "h") c.grid.h = to_int_list(value, where);
    else if (key == "w") c.grid.w = to_int_list(value, where);
    else if (key == "iterations") c.grid.iterations = to_i64(value, where);
    else throw UsageError(where + ": unknown key");
  } else {
    throw UsageError("unknown config section [" + section + "]");
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": bad section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw UsageError("config line " + std::to_string(lineno) + ": key before any section");
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    apply_key(c, section, key, value);
  }
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[model]\n";
  o << "arch = " << c.arch << "\n";
  o << "z_factor = " << c.z_factor << "\n";
  o << "\n[fsrcnn]\n";
  o << "m = " << c.fsrcnn.m << "\n";
  o << "d = " << c.fsrcnn.d << "\n";
  o << "s = " << c.fsrcnn.s << "\n";
  o << "activation = " << (c.fsrcnn.relu ? "relu" : "prelu") << "\n";
  o << "\n[srunet]\n";
  o << "h = " << c.srunet.h << "\n";
  o << "w = " << c.srunet.w << "\n";
  o << "d = " << c.srunet.d << "\n";
  o << "channel_mode = " << (c.srunet.channel_mode == ChannelMode::kDouble ? "double" : "paper") << "\n";
  o << "skip_kernel_lateral = " << c.srunet.skip_kernel_lateral << "\n";
  o << "skip_deconv_position = "
    << (c.srunet.skip_position == SkipDeconvPosition::kBeforeConvs ? "before_convs" : "after_convs") << "\n";
  o << "\n[train]\n";
  o << "batch = " << c.batch << "\n";
  o << "iterations = " << c.iterations << "\n";
  o << "alpha_init = " << fmt_double(c.alpha_init) << "\n";
  o << "decay_steps = " << c.decay_steps << "\n";
  o << "seed = " << c.seed << "\n";
  o << "checkpoint_every = " << c.checkpoint_every << "\n";
  o << "val_every = " << c.val_every << "\n";
  o << "fixed_patch = " << (c.fixed_patch ? "true" : "false") << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "\n[data]\n";
  o << "volume = " << c.volume_path << "\n";
  o << "train_frac = " << fmt_double(c.split.train_frac) << "\n";
  o << "val_frac = " << fmt_double(c.split.val_frac) << "\n";
  o << "test_frac = " << fmt_double(c.split.test_frac) << "\n";
  const char* ax = c.split.axis == SplitAxis::kAuto ? "auto"
                   : c.split.axis == SplitAxis::kX  ? "x"
                   : c.split.axis == SplitAxis::kY  ? "y"
                                                    : "z";
  o << "split_axis = " << ax << "\n";
  o << "patch_x = " << c.patch[0] << "\n";
  o << "patch_y = " << c.patch[1] << "\n";
  o << "patch_z = " << c.patch[2] << "\n";
  o << "margin = " << c.margin << "\n";
  o << "\n[eval]\n";
  o << "border = " << c.tile.border << "\n";
  o << "tile_x = " << c.tile.tile[0] << "\n";
  o << "tile_y = " << c.tile.tile[1] << "\n";
  o << "tile_z = " << c.tile.tile[2] << "\n";
  o << "cubic = " << (c.cubic == CubicMode::kTricubic ? "tricubic" : "z") << "\n";
  o << "range = " << fmt_double(c.range) << "\n";
  o << "\n[grid]\n";
  if (!c.grid.m.empty()) o << "m = " << join_ints(c.grid.m) << "\n";
  if (!c.grid.d.empty()) o << "d = " << join_ints(c.grid.d) << "\n";
  if (!c.grid.s.empty()) o << "s = " << join_ints(c.grid.s) << "\n";
  if (!c.grid.h.empty()) o << "h = " << join_ints(c.grid.h) << "\n";
  if (!c.grid.w.empty()) o << "w = " << join_ints(c.grid.w) << "\n";
  o << "iterations = " << c.grid.iterations << "\n";
  return o.str();
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set needs section.key=value, got '" + assignment + "'");
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto dot = path.find('.');
  if (dot == std::string::npos) throw UsageError("--set needs section.key=value, got '" + assignment + "'");
  apply_key(cfg, path.substr(0, dot), path.substr(dot + 1), value);
}

NetworkDesc build_network(const RunConfig& cfg) {
  if (cfg.arch == "fsrcnn3d") {
    FsrcnnSpec s = cfg.fsrcnn;
    s.z_factor = cfg.z_factor;
    return build_fsrcnn3d(s);
  }
  SrunetSpec s = cfg.srunet;
  s.z_factor = cfg.z_factor;
  return build_srunet3d(s);
}

LrSchedule schedule_for(const RunConfig& cfg) {
  LrSchedule sched;
  sched.alpha_init = cfg.alpha_init;
  sched.decay_steps = cfg.decay_steps > 0 ? cfg.decay_steps : (cfg.arch == "fsrcnn3d" ? 20000 : 50000);
  return sched;
}

}  // namespace isosr
