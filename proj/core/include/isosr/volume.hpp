#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isosr/error.hpp"
#include "isosr/tensor.hpp"

namespace isosr {

enum class VolDType { kU8, kF32 };

// 3D grayscale volume with voxel-spacing metadata. Storage is x fastest-
// varying (the on-disk payload order); tensors use z fastest, so the
// conversion helpers transpose.
struct Volume {
  i64 x = 0, y = 0, z = 0;
  std::array<double, 3> voxel_nm = {8.0, 8.0, 8.0};
  VolDType dtype = VolDType::kF32;
  std::vector<std::uint8_t> u8;
  std::vector<float> f32;
  std::string provenance = "synthetic";  // in-memory tag, not serialized

  i64 voxels() const { return x * y * z; }

  i64 index(i64 ix, i64 iy, i64 iz) const { return ix + x * (iy + y * iz); }

  // Intensity on the [0,1] scale regardless of storage dtype.
  float value01(i64 ix, i64 iy, i64 iz) const {
    const i64 i = index(ix, iy, iz);
    return dtype == VolDType::kU8 ? static_cast<float>(u8[static_cast<std::size_t>(i)]) / 255.0f
                                  : f32[static_cast<std::size_t>(i)];
  }

  static Volume make_f32(i64 x, i64 y, i64 z, std::array<double, 3> voxel_nm = {8.0, 8.0, 8.0}) {
    Volume v;
    v.x = x;
    v.y = y;
    v.z = z;
    v.voxel_nm = voxel_nm;
    v.dtype = VolDType::kF32;
    v.f32.assign(static_cast<std::size_t>(shape_numel({x, y, z})), 0.0f);
    return v;
  }
};

// Axis-aligned sub-box, [begin, end) per axis.
struct Region {
  std::array<i64, 3> begin{0, 0, 0};
  std::array<i64, 3> end{0, 0, 0};

  i64 extent(int axis) const { return end[static_cast<std::size_t>(axis)] - begin[static_cast<std::size_t>(axis)]; }
  i64 voxels() const { return extent(0) * extent(1) * extent(2); }

  static Region whole(const Volume& v) { return Region{{0, 0, 0}, {v.x, v.y, v.z}}; }
};

// File format: "VVOL1\n", then "extent X Y Z", "voxel_nm x y z",
// "dtype u8|f32", "data", then the raw little-endian payload, x fastest.
Volume read_volume(const std::string& path);
void write_volume(const Volume& v, const std::string& path);

// Normalized [0,1] tensor (1,1,X,Y,Z) of a region; tensor layout z fastest.
Tensor<float> region_to_tensor(const Volume& v, const Region& r);
inline Tensor<float> volume_to_tensor(const Volume& v) { return region_to_tensor(v, Region::whole(v)); }

// Writes a (1,1,X,Y,Z) tensor into an f32 volume's region (same extents).
void tensor_to_region(const Tensor<float>& t, Volume& v, const Region& r);
Volume tensor_to_volume(const Tensor<float>& t, std::array<double, 3> voxel_nm = {8.0, 8.0, 8.0});

}  // namespace isosr
