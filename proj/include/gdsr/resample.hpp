#pragma once

#include "gdsr/raster.hpp"

namespace gdsr {

/// Keys cubic convolution kernel with a = -0.5 (Catmull-Rom). Interpolating
/// (W(0)=1, W(k)=0 for integer k!=0) and reproduces polynomials up to
/// degree 1 exactly.
double cubic_kernel(double t);

/// Samples one row of values at fractional position x using the cubic
/// kernel, clamping taps to the row (edge replication).
double cubic_sample(std::span<const float> row, double x);

/// Bicubic point sample of a height raster at fractional (row, col).
double bicubic_sample(const HeightRaster& src, double row, double col);

/// Resamples to the requested size with separable cubic convolution.
/// Pixel-center alignment: output center i maps to input coordinate
/// (i + 0.5) * (in / out) - 0.5. Border handling is clamp-to-edge, and the
/// cell size is rescaled by the width ratio.
///
/// Throws DataError for empty input or output dims < 1, and rejects inputs
/// carrying nodata.
HeightRaster bicubic_resample(const HeightRaster& src, int out_height, int out_width);

}  // namespace gdsr
