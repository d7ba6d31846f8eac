#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "gdsr/errors.hpp"

namespace gdsr {

using Array2Df = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Array2Dd = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Single-band height grid in meters, row-major. `cell_size` is meters per
/// pixel. An optional nodata mask marks invalid pixels; non-masked values
/// must be finite.
struct HeightRaster {
  int height = 0;
  int width = 0;
  double cell_size = 1.0;
  Eigen::ArrayXf values;  // height * width, row-major
  std::optional<MaskArray> nodata_mask;

  HeightRaster() = default;
  HeightRaster(int h, int w, double cell, float fill = 0.0f)
      : height(h), width(w), cell_size(cell),
        values(Eigen::ArrayXf::Constant(static_cast<Eigen::Index>(h) * w, fill)) {}

  float& at(int r, int c) { return values(static_cast<Eigen::Index>(r) * width + c); }
  float at(int r, int c) const { return values(static_cast<Eigen::Index>(r) * width + c); }

  Eigen::Map<Array2Df> map2d() { return {values.data(), height, width}; }
  Eigen::Map<const Array2Df> map2d() const { return {values.data(), height, width}; }

  bool empty() const { return height == 0 || width == 0; }
  bool has_nodata() const { return nodata_mask && nodata_mask->any(); }

  /// Throws DataError if the type invariants do not hold.
  void validate() const;
};

/// Multi-channel guide grid (e.g. RGB intensities), row-major and
/// channel-interleaved: values[(r * width + c) * channels + ch].
struct GuideRaster {
  int height = 0;
  int width = 0;
  int channels = 0;
  Eigen::ArrayXf values;

  GuideRaster() = default;
  GuideRaster(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        values(Eigen::ArrayXf::Constant(static_cast<Eigen::Index>(h) * w * c, fill)) {}

  float& at(int r, int c, int ch) {
    return values((static_cast<Eigen::Index>(r) * width + c) * channels + ch);
  }
  float at(int r, int c, int ch) const {
    return values((static_cast<Eigen::Index>(r) * width + c) * channels + ch);
  }

  bool empty() const { return height == 0 || width == 0 || channels == 0; }

  void validate() const;
};

/// Corpus-level normalization statistics: one global standard deviation for
/// heights, per-channel mean/std for guide intensities.
struct NormStats {
  double dsm_global_std = 1.0;
  Eigen::ArrayXd guide_channel_mean;
  Eigen::ArrayXd guide_channel_std;

  void validate() const;
};

/// A height patch in normalized (unitless) form: values = (h - local_mean) /
/// dsm_global_std. The local mean and the stats used are recorded so the
/// transform inverts exactly.
struct NormalizedPatch {
  int height = 0;
  int width = 0;
  double cell_size = 1.0;
  Eigen::ArrayXd values;  // row-major, double so the round trip is exact
  double local_mean = 0.0;
  NormStats stats;
};

/// Population statistics over every pixel of all training samples. Throws
/// DataError when any variance is zero (degenerate corpus).
NormStats compute_norm_stats(std::span<const HeightRaster> train_dsms,
                             std::span<const GuideRaster> train_guides);

/// (patch - mean(patch)) / dsm_global_std, recording the local mean.
NormalizedPatch normalize_dsm_patch(const HeightRaster& patch, const NormStats& stats);

/// Exact inverse of normalize_dsm_patch: values * std + local_mean.
HeightRaster denormalize_dsm_patch(const NormalizedPatch& patch);

/// Per-channel (v - mean_c) / std_c over the whole guide.
GuideRaster normalize_guide(const GuideRaster& guide, const NormStats& stats);

}  // namespace gdsr
