#include "gdsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gdsr {

namespace {

constexpr double kNmadScale = 1.4826;  // consistency constant for Gaussian sigma

void check_dims(const HeightRaster& a, const HeightRaster& b, const char* op) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
}

/// Signed differences pred - gt over valid (unmasked in both) pixels.
std::vector<double> valid_diffs(const HeightRaster& pred, const HeightRaster& gt,
                                const char* op) {
  check_dims(pred, gt, op);
  std::vector<double> d;
  d.reserve(static_cast<size_t>(pred.values.size()));
  for (Eigen::Index i = 0; i < pred.values.size(); ++i) {
    if (pred.nodata_mask && (*pred.nodata_mask)(i)) continue;
    if (gt.nodata_mask && (*gt.nodata_mask)(i)) continue;
    d.push_back(static_cast<double>(pred.values(i)) - static_cast<double>(gt.values(i)));
  }
  if (d.empty()) throw DataError(std::string(op) + ": no valid pixels");
  return d;
}

/// Median with the mean-of-middle convention for even lengths. Mutates v.
double median_inplace(std::vector<double>& v) {
  size_t n = v.size();
  auto mid = v.begin() + static_cast<ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

double rmse(const HeightRaster& pred, const HeightRaster& gt) {
  std::vector<double> d = valid_diffs(pred, gt, "rmse");
  double ss = 0.0;
  for (double x : d) ss += x * x;
  return std::sqrt(ss / static_cast<double>(d.size()));
}

double nmad(const HeightRaster& pred, const HeightRaster& gt) {
  std::vector<double> d = valid_diffs(pred, gt, "nmad");
  double med = median_inplace(d);
  for (double& x : d) x = std::abs(x - med);
  return kNmadScale * median_inplace(d);
}

double medae(const HeightRaster& pred, const HeightRaster& gt) {
  std::vector<double> d = valid_diffs(pred, gt, "medae");
  for (double& x : d) x = std::abs(x);
  return median_inplace(d);
}

MetricsReport compute_metrics(const HeightRaster& pred, const HeightRaster& gt) {
  MetricsReport r;
  r.rmse = rmse(pred, gt);
  r.nmad = nmad(pred, gt);
  r.medae = medae(pred, gt);
  r.n_pixels = static_cast<int64_t>(valid_diffs(pred, gt, "metrics").size());
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << rmse << "," << nmad << "," << medae << "," << n_pixels;
  return os.str();
}

std::vector<ProfileSample> line_profile(const HeightRaster& raster, double x0, double y0,
                                        double x1, double y1, int n_samples) {
  raster.validate();
  if (n_samples < 2) throw DataError("line_profile: n_samples must be >= 2");
  auto inside = [&](double x, double y) {
    return x >= 0.0 && y >= 0.0 && x <= raster.width - 1.0 && y <= raster.height - 1.0;
  };
  if (!inside(x0, y0) || !inside(x1, y1))
    throw DataError("line_profile: endpoints must lie inside the raster");

  double seg_px = std::hypot(x1 - x0, y1 - y0);
  std::vector<ProfileSample> out;
  out.reserve(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    double t = static_cast<double>(i) / (n_samples - 1);
    double x = x0 + t * (x1 - x0);
    double y = y0 + t * (y1 - y0);
    int cx = std::min(static_cast<int>(std::floor(x)), raster.width - 2 >= 0 ? raster.width - 2 : 0);
    int cy = std::min(static_cast<int>(std::floor(y)), raster.height - 2 >= 0 ? raster.height - 2 : 0);
    cx = std::max(cx, 0);
    cy = std::max(cy, 0);
    double fx = x - cx;
    double fy = y - cy;
    int cx1 = std::min(cx + 1, raster.width - 1);
    int cy1 = std::min(cy + 1, raster.height - 1);
    double h = (1.0 - fy) * ((1.0 - fx) * raster.at(cy, cx) + fx * raster.at(cy, cx1)) +
               fy * ((1.0 - fx) * raster.at(cy1, cx) + fx * raster.at(cy1, cx1));
    out.push_back({t * seg_px * raster.cell_size, h});
  }
  return out;
}

std::string profile_to_csv(const std::vector<ProfileSample>& profile) {
  std::ostringstream os;
  os.precision(10);
  os << "distance_m,height_m\n";
  for (const auto& s : profile) os << s.distance_m << "," << s.height_m << "\n";
  return os.str();
}

}  // namespace gdsr
