#pragma once

#include <string>
#include <vector>

#include "gdsr/raster.hpp"

namespace gdsr {

/// Per-pixel error summary between a prediction and ground truth, in meters.
struct MetricsReport {
  double rmse = 0.0;
  double nmad = 0.0;
  double medae = 0.0;
  int64_t n_pixels = 0;

  /// One-line CSV: rmse,nmad,medae,n_pixels
  std::string to_csv() const;
};

/// Root mean square of per-pixel differences. Masked pixels (in either
/// raster) are excluded; at least one valid pixel is required.
double rmse(const HeightRaster& pred, const HeightRaster& gt);

/// Normalized median absolute deviation: 1.4826 * median(|d - median(d)|)
/// with d = pred - gt. Even-length medians average the two middle order
/// statistics.
double nmad(const HeightRaster& pred, const HeightRaster& gt);

/// Median of absolute per-pixel errors.
double medae(const HeightRaster& pred, const HeightRaster& gt);

MetricsReport compute_metrics(const HeightRaster& pred, const HeightRaster& gt);

struct ProfileSample {
  double distance_m;
  double height_m;
};

/// Bilinear samples at n equally spaced points along the segment from p0 to
/// p1 (pixel coordinates, x = column, y = row). Distances are meters from
/// p0 via the raster cell size. Endpoints must lie inside the raster.
std::vector<ProfileSample> line_profile(const HeightRaster& raster, double x0, double y0,
                                        double x1, double y1, int n_samples);

/// CSV rows "distance_m,height_m", one per sample, with a header line.
std::string profile_to_csv(const std::vector<ProfileSample>& profile);

}  // namespace gdsr
