#include "gdsr/raster.hpp"

#include <cmath>

namespace gdsr {

void HeightRaster::validate() const {
  if (height < 0 || width < 0)
    throw DataError("height raster: negative dimensions");
  if (values.size() != static_cast<Eigen::Index>(height) * width)
    throw DataError("height raster: values length " + std::to_string(values.size()) +
                    " does not match " + std::to_string(height) + "x" + std::to_string(width));
  if (!(cell_size > 0.0))
    throw DataError("height raster: cell_size must be positive");
  if (nodata_mask && nodata_mask->size() != values.size())
    throw DataError("height raster: nodata mask size mismatch");
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (nodata_mask && (*nodata_mask)(i)) continue;
    if (!std::isfinite(values(i)))
      throw DataError("height raster: non-finite value at index " + std::to_string(i));
  }
}

void GuideRaster::validate() const {
  if (height < 0 || width < 0 || channels < 1)
    throw DataError("guide raster: bad dimensions");
  if (values.size() != static_cast<Eigen::Index>(height) * width * channels)
    throw DataError("guide raster: values length does not match dimensions");
  if (!values.allFinite())
    throw DataError("guide raster: non-finite value");
}

void NormStats::validate() const {
  if (!(dsm_global_std > 0.0))
    throw DataError("norm stats: dsm_global_std must be positive");
  if (guide_channel_mean.size() != guide_channel_std.size())
    throw DataError("norm stats: guide channel mean/std length mismatch");
  for (Eigen::Index c = 0; c < guide_channel_std.size(); ++c)
    if (!(guide_channel_std(c) > 0.0))
      throw DataError("norm stats: guide channel std must be positive");
}

NormStats compute_norm_stats(std::span<const HeightRaster> train_dsms,
                             std::span<const GuideRaster> train_guides) {
  if (train_dsms.empty() || train_guides.empty())
    throw DataError("compute_norm_stats: at least one training sample required");

  // Two-pass population statistics over every pixel of every sample.
  double sum = 0.0;
  int64_t n = 0;
  for (const auto& r : train_dsms) {
    r.validate();
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
      if (r.nodata_mask && (*r.nodata_mask)(i)) continue;
      sum += r.values(i);
      ++n;
    }
  }
  if (n == 0) throw DataError("compute_norm_stats: no valid height pixels");
  double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& r : train_dsms) {
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
      if (r.nodata_mask && (*r.nodata_mask)(i)) continue;
      double d = r.values(i) - mean;
      ss += d * d;
    }
  }
  double var = ss / static_cast<double>(n);
  if (!(var > 0.0))
    throw DataError("compute_norm_stats: degenerate data, zero height variance");

  int channels = train_guides.front().channels;
  for (const auto& g : train_guides) {
    g.validate();
    if (g.channels != channels)
      throw DataError("compute_norm_stats: inconsistent guide channel counts");
  }
  Eigen::ArrayXd csum = Eigen::ArrayXd::Zero(channels);
  int64_t npx = 0;
  for (const auto& g : train_guides) {
    for (int r = 0; r < g.height; ++r)
      for (int c = 0; c < g.width; ++c)
        for (int ch = 0; ch < channels; ++ch) csum(ch) += g.at(r, c, ch);
    npx += static_cast<int64_t>(g.height) * g.width;
  }
  if (npx == 0) throw DataError("compute_norm_stats: empty guide rasters");
  Eigen::ArrayXd cmean = csum / static_cast<double>(npx);
  Eigen::ArrayXd css = Eigen::ArrayXd::Zero(channels);
  for (const auto& g : train_guides) {
    for (int r = 0; r < g.height; ++r)
      for (int c = 0; c < g.width; ++c)
        for (int ch = 0; ch < channels; ++ch) {
          double d = g.at(r, c, ch) - cmean(ch);
          css(ch) += d * d;
        }
  }
  NormStats stats;
  stats.dsm_global_std = std::sqrt(var);
  stats.guide_channel_mean = cmean;
  stats.guide_channel_std = (css / static_cast<double>(npx)).sqrt();
  for (int ch = 0; ch < channels; ++ch)
    if (!(stats.guide_channel_std(ch) > 0.0))
      throw DataError("compute_norm_stats: degenerate data, zero variance in guide channel " +
                      std::to_string(ch));
  return stats;
}

NormalizedPatch normalize_dsm_patch(const HeightRaster& patch, const NormStats& stats) {
  stats.validate();
  patch.validate();
  if (patch.values.size() == 0) throw DataError("normalize_dsm_patch: empty patch");

  NormalizedPatch out;
  out.height = patch.height;
  out.width = patch.width;
  out.cell_size = patch.cell_size;
  out.stats = stats;
  Eigen::ArrayXd v = patch.values.cast<double>();
  out.local_mean = v.mean();
  out.values = (v - out.local_mean) / stats.dsm_global_std;
  return out;
}

HeightRaster denormalize_dsm_patch(const NormalizedPatch& patch) {
  patch.stats.validate();
  HeightRaster out;
  out.height = patch.height;
  out.width = patch.width;
  out.cell_size = patch.cell_size;
  out.values =
      (patch.values * patch.stats.dsm_global_std + patch.local_mean).cast<float>();
  return out;
}

GuideRaster normalize_guide(const GuideRaster& guide, const NormStats& stats) {
  stats.validate();
  guide.validate();
  if (stats.guide_channel_mean.size() != guide.channels)
    throw ShapeError("normalize_guide: stats have " +
                     std::to_string(stats.guide_channel_mean.size()) +
                     " channels, guide has " + std::to_string(guide.channels));
  GuideRaster out = guide;
  for (int r = 0; r < guide.height; ++r)
    for (int c = 0; c < guide.width; ++c)
      for (int ch = 0; ch < guide.channels; ++ch)
        out.at(r, c, ch) = static_cast<float>(
            (guide.at(r, c, ch) - stats.guide_channel_mean(ch)) / stats.guide_channel_std(ch));
  return out;
}

}  // namespace gdsr
