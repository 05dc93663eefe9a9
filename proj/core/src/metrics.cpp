#include "isosr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace isosr {

namespace {

void check_extents(const Volume& a, const Volume& b, const char* what) {
  if (a.x != b.x || a.y != b.y || a.z != b.z) {
    throw ShapeError(std::string(what) + ": volume extents differ");
  }
}

}  // namespace

double psnr_from_mse(double mse, double range) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

double mse_region(const Volume& a, const Volume& b, const Region& r, double range) {
  check_extents(a, b, "mse");
  double acc = 0.0;
  for (i64 iz = r.begin[2]; iz < r.end[2]; ++iz) {
    for (i64 iy = r.begin[1]; iy < r.end[1]; ++iy) {
      for (i64 ix = r.begin[0]; ix < r.end[0]; ++ix) {
        const double d = range * (static_cast<double>(a.value01(ix, iy, iz)) - static_cast<double>(b.value01(ix, iy, iz)));
        acc += d * d;
      }
    }
  }
  return acc / static_cast<double>(r.voxels());
}

double wmse_region(const Volume& pred, const Volume& hr, const Volume& cub, const Region& r, double range) {
  check_extents(pred, hr, "wmse");
  check_extents(cub, hr, "wmse");
  double max_d2 = 0.0;
  for (i64 iz = r.begin[2]; iz < r.end[2]; ++iz) {
    for (i64 iy = r.begin[1]; iy < r.end[1]; ++iy) {
      for (i64 ix = r.begin[0]; ix < r.end[0]; ++ix) {
        const double d = static_cast<double>(hr.value01(ix, iy, iz)) - static_cast<double>(cub.value01(ix, iy, iz));
        max_d2 = std::max(max_d2, d * d);
      }
    }
  }
  double acc = 0.0;
  for (i64 iz = r.begin[2]; iz < r.end[2]; ++iz) {
    for (i64 iy = r.begin[1]; iy < r.end[1]; ++iy) {
      for (i64 ix = r.begin[0]; ix < r.end[0]; ++ix) {
        const double dc = static_cast<double>(hr.value01(ix, iy, iz)) - static_cast<double>(cub.value01(ix, iy, iz));
        const double w = max_d2 > 0.0 ? 0.5 + (dc * dc) / (2.0 * max_d2) : 0.5;
        const double e = range * (static_cast<double>(hr.value01(ix, iy, iz)) - static_cast<double>(pred.value01(ix, iy, iz)));
        acc += w * e * e;
      }
    }
  }
  return acc / static_cast<double>(r.voxels());
}

MetricsRecord evaluate_region(const Volume& pred, const Volume& hr, const Volume& cub, const Region& r,
                              i64 border, double range) {
  MetricsRecord rec;
  rec.mse = mse_region(hr, pred, r, range);
  rec.psnr = psnr_from_mse(rec.mse, range);
  rec.wmse = wmse_region(pred, hr, cub, r, range);
  rec.wpsnr = psnr_from_mse(rec.wmse, range);
  rec.mse_cubic = mse_region(hr, cub, r, range);
  rec.psnr_cubic = psnr_from_mse(rec.mse_cubic, range);
  rec.wmse_cubic = wmse_region(cub, hr, cub, r, range);
  rec.wpsnr_cubic = psnr_from_mse(rec.wmse_cubic, range);
  rec.voxels = r.voxels();
  rec.border = border;
  return rec;
}

std::string metrics_csv_header() {
  return "model,iteration,split,psnr,wpsnr,mse,wmse,psnr_cubic,wpsnr_cubic,voxels,border\n";
}

std::string metrics_csv_row(const std::string& model, i64 iteration, const std::string& split,
                            const MetricsRecord& rec) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld,%lld\n", model.c_str(),
                static_cast<long long>(iteration), split.c_str(), rec.psnr, rec.wpsnr, rec.mse, rec.wmse,
                rec.psnr_cubic, rec.wpsnr_cubic, static_cast<long long>(rec.voxels),
                static_cast<long long>(rec.border));
  return buf;
}

}  // namespace isosr
