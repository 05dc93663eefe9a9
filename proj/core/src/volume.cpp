#include "isosr/volume.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace isosr {

namespace {

std::string read_header_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": truncated header");
  }
  return line;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream iss(s);
  std::vector<std::string> out;
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

i64 parse_extent(const std::string& tok, const std::string& path) {
  i64 v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v < 1) {
    throw DataError(path + ": bad extent '" + tok + "'");
  }
  return v;
}

}  // namespace

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");

  if (read_header_line(in, path) != "VVOL1") {
    throw DataError(path + ": not a VVOL1 file");
  }

  Volume v;
  bool have_extent = false, have_dtype = false;
  for (;;) {
    const std::string line = read_header_line(in, path);
    if (line == "data") break;
    const auto toks = split_ws(line);
    if (toks.empty()) throw DataError(path + ": empty header line");
    if (toks[0] == "extent") {
      if (toks.size() != 4) throw DataError(path + ": extent needs three values");
      v.x = parse_extent(toks[1], path);
      v.y = parse_extent(toks[2], path);
      v.z = parse_extent(toks[3], path);
      have_extent = true;
    } else if (toks[0] == "voxel_nm") {
      if (toks.size() != 4) throw DataError(path + ": voxel_nm needs three values");
      for (int a = 0; a < 3; ++a) {
        try {
          v.voxel_nm[static_cast<std::size_t>(a)] = std::stod(toks[static_cast<std::size_t>(a + 1)]);
        } catch (const std::exception&) {
          throw DataError(path + ": bad voxel_nm value '" + toks[static_cast<std::size_t>(a + 1)] + "'");
        }
      }
    } else if (toks[0] == "dtype") {
      if (toks.size() != 2) throw DataError(path + ": dtype needs one value");
      if (toks[1] == "u8") {
        v.dtype = VolDType::kU8;
      } else if (toks[1] == "f32") {
        v.dtype = VolDType::kF32;
      } else {
        throw DataError(path + ": unknown dtype '" + toks[1] + "'");
      }
      have_dtype = true;
    } else {
      throw DataError(path + ": unknown header key '" + toks[0] + "'");
    }
  }
  if (!have_extent) throw DataError(path + ": missing extent");
  if (!have_dtype) throw DataError(path + ": missing dtype");

  const i64 n = shape_numel({v.x, v.y, v.z});
  const i64 elem = v.dtype == VolDType::kU8 ? 1 : 4;
  if (n > std::numeric_limits<i64>::max() / elem) {
    throw DataError(path + ": extent overflow");
  }
  const i64 bytes = n * elem;

  if (v.dtype == VolDType::kU8) {
    v.u8.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(v.u8.data()), bytes);
  } else {
    v.f32.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(v.f32.data()), bytes);
  }
  if (in.gcount() != bytes) {
    throw DataError(path + ": truncated payload (expected " + std::to_string(bytes) + " bytes, got " +
                    std::to_string(in.gcount()) + ")");
  }
  char extra = 0;
  if (in.read(&extra, 1); in.gcount() != 0) {
    throw DataError(path + ": trailing bytes after payload");
  }
  v.provenance = "real";
  return v;
}

void write_volume(const Volume& v, const std::string& path) {
  if (v.x < 1 || v.y < 1 || v.z < 1) {
    throw DataError(path + ": refusing to write zero-extent volume");
  }
  const i64 n = shape_numel({v.x, v.y, v.z});
  const std::size_t want = static_cast<std::size_t>(n);
  if (v.dtype == VolDType::kU8 ? v.u8.size() != want : v.f32.size() != want) {
    throw DataError(path + ": payload size does not match extent");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");

  char head[256];
  std::snprintf(head, sizeof(head), "VVOL1\nextent %lld %lld %lld\nvoxel_nm %.17g %.17g %.17g\ndtype %s\ndata\n",
                static_cast<long long>(v.x), static_cast<long long>(v.y), static_cast<long long>(v.z),
                v.voxel_nm[0], v.voxel_nm[1], v.voxel_nm[2], v.dtype == VolDType::kU8 ? "u8" : "f32");
  out << head;
  if (v.dtype == VolDType::kU8) {
    out.write(reinterpret_cast<const char*>(v.u8.data()), n);
  } else {
    out.write(reinterpret_cast<const char*>(v.f32.data()), n * 4);
  }
  out.flush();
  if (!out) throw DataError(path + ": write failed");
}

Tensor<float> region_to_tensor(const Volume& v, const Region& r) {
  for (int a = 0; a < 3; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    const i64 ext = a == 0 ? v.x : a == 1 ? v.y : v.z;
    if (r.begin[ai] < 0 || r.end[ai] > ext || r.begin[ai] >= r.end[ai]) {
      throw DataError("region out of bounds on axis " + std::string(1, "xyz"[ai]));
    }
  }
  const i64 rx = r.extent(0), ry = r.extent(1), rz = r.extent(2);
  Tensor<float> t({1, 1, rx, ry, rz});
  float* out = t.data();
  for (i64 ix = 0; ix < rx; ++ix) {
    for (i64 iy = 0; iy < ry; ++iy) {
      for (i64 iz = 0; iz < rz; ++iz) {
        out[(ix * ry + iy) * rz + iz] = v.value01(r.begin[0] + ix, r.begin[1] + iy, r.begin[2] + iz);
      }
    }
  }
  return t;
}

void tensor_to_region(const Tensor<float>& t, Volume& v, const Region& r) {
  if (v.dtype != VolDType::kF32) throw DataError("tensor_to_region needs an f32 volume");
  const Shape& s = t.shape();
  if (s.size() != 5 || s[0] != 1 || s[1] != 1 || s[2] != r.extent(0) || s[3] != r.extent(1) ||
      s[4] != r.extent(2)) {
    throw ShapeError("tensor shape " + shape_str(s) + " does not match region extents");
  }
  const i64 rx = r.extent(0), ry = r.extent(1), rz = r.extent(2);
  const float* in = t.data();
  for (i64 ix = 0; ix < rx; ++ix) {
    for (i64 iy = 0; iy < ry; ++iy) {
      for (i64 iz = 0; iz < rz; ++iz) {
        v.f32[static_cast<std::size_t>(v.index(r.begin[0] + ix, r.begin[1] + iy, r.begin[2] + iz))] =
            in[(ix * ry + iy) * rz + iz];
      }
    }
  }
}

Volume tensor_to_volume(const Tensor<float>& t, std::array<double, 3> voxel_nm) {
  const Shape& s = t.shape();
  if (s.size() != 5 || s[0] != 1 || s[1] != 1) {
    throw ShapeError("tensor_to_volume needs a (1,1,X,Y,Z) tensor, got " + shape_str(s));
  }
  Volume v = Volume::make_f32(s[2], s[3], s[4], voxel_nm);
  tensor_to_region(t, v, Region::whole(v));
  return v;
}

}  // namespace isosr
