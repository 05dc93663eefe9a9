#pragma once

#include <string>

#include "isosr/volume.hpp"

namespace isosr {

// All metric values are on the 8-bit intensity scale: [0,1] voxel values
// are multiplied by R=255 before squaring, so MSE and PSNR match what an
// evaluation on uint8 volumes with peak 255 would report.
inline constexpr double kIntensityRange = 255.0;

struct MetricsRecord {
  double mse = 0.0;
  double psnr = 0.0;
  double wmse = 0.0;
  double wpsnr = 0.0;
  double mse_cubic = 0.0;
  double psnr_cubic = 0.0;
  double wmse_cubic = 0.0;
  double wpsnr_cubic = 0.0;
  i64 voxels = 0;
  i64 border = 0;
};

// mse -> 10*log10(R^2/mse); +inf when mse is 0.
double psnr_from_mse(double mse, double range = kIntensityRange);

double mse_region(const Volume& a, const Volume& b, const Region& r, double range = kIntensityRange);

// Weighted MSE: per-voxel weight 1/2 + (hr-cub)^2 / (2*max(hr-cub)^2),
// with the max taken over the evaluated region. All-zero difference
// degrades to uniform weight 1/2. Weights are scale-invariant; the
// squared error term uses the 8-bit scale like mse_region.
double wmse_region(const Volume& pred, const Volume& hr, const Volume& cub, const Region& r,
                   double range = kIntensityRange);

// Fills prediction and cubic-baseline metrics over one region.
MetricsRecord evaluate_region(const Volume& pred, const Volume& hr, const Volume& cub, const Region& r,
                              i64 border, double range = kIntensityRange);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& model, i64 iteration, const std::string& split,
                            const MetricsRecord& rec);

}  // namespace isosr
