#include "gdsr/resample.hpp"

#include <algorithm>
#include <cmath>

namespace gdsr {

double cubic_kernel(double t) {
  constexpr double a = -0.5;
  double x = std::abs(t);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return a * (((x - 5.0) * x + 8.0) * x - 4.0);
  return 0.0;
}

namespace {

struct TapWeights {
  int base;         // index of the second tap
  double w[4];
};

inline TapWeights taps_at(double x) {
  TapWeights t;
  double fl = std::floor(x);
  t.base = static_cast<int>(fl);
  double f = x - fl;
  t.w[0] = cubic_kernel(f + 1.0);
  t.w[1] = cubic_kernel(f);
  t.w[2] = cubic_kernel(f - 1.0);
  t.w[3] = cubic_kernel(f - 2.0);
  return t;
}

inline int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

double cubic_sample(std::span<const float> row, double x) {
  int n = static_cast<int>(row.size());
  TapWeights t = taps_at(x);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k)
    acc += t.w[k] * row[clamp_index(t.base - 1 + k, n)];
  return acc;
}

double bicubic_sample(const HeightRaster& src, double row, double col) {
  TapWeights ty = taps_at(row);
  TapWeights tx = taps_at(col);
  double acc = 0.0;
  for (int ky = 0; ky < 4; ++ky) {
    int r = clamp_index(ty.base - 1 + ky, src.height);
    double line = 0.0;
    for (int kx = 0; kx < 4; ++kx)
      line += tx.w[kx] * src.at(r, clamp_index(tx.base - 1 + kx, src.width));
    acc += ty.w[ky] * line;
  }
  return acc;
}

HeightRaster bicubic_resample(const HeightRaster& src, int out_height, int out_width) {
  src.validate();
  if (src.empty()) throw DataError("bicubic_resample: empty source raster");
  if (out_height < 1 || out_width < 1)
    throw DataError("bicubic_resample: output dimensions must be >= 1");
  if (src.has_nodata())
    throw DataError("bicubic_resample: rasters with nodata are unsupported");

  double sy = static_cast<double>(src.height) / out_height;
  double sx = static_cast<double>(src.width) / out_width;

  // Horizontal pass into a double buffer, then vertical pass.
  Array2Dd tmp(src.height, out_width);
  std::vector<TapWeights> xw(out_width);
  for (int oc = 0; oc < out_width; ++oc) xw[oc] = taps_at((oc + 0.5) * sx - 0.5);
  for (int r = 0; r < src.height; ++r) {
    for (int oc = 0; oc < out_width; ++oc) {
      const TapWeights& t = xw[oc];
      double acc = 0.0;
      for (int k = 0; k < 4; ++k)
        acc += t.w[k] * src.at(r, clamp_index(t.base - 1 + k, src.width));
      tmp(r, oc) = acc;
    }
  }

  HeightRaster out;
  out.height = out_height;
  out.width = out_width;
  out.cell_size = src.cell_size * (static_cast<double>(src.width) / out_width);
  out.values.resize(static_cast<Eigen::Index>(out_height) * out_width);
  for (int orow = 0; orow < out_height; ++orow) {
    TapWeights t = taps_at((orow + 0.5) * sy - 0.5);
    int r0 = clamp_index(t.base - 1, src.height);
    int r1 = clamp_index(t.base, src.height);
    int r2 = clamp_index(t.base + 1, src.height);
    int r3 = clamp_index(t.base + 2, src.height);
    for (int oc = 0; oc < out_width; ++oc) {
      double acc = t.w[0] * tmp(r0, oc) + t.w[1] * tmp(r1, oc) +
                   t.w[2] * tmp(r2, oc) + t.w[3] * tmp(r3, oc);
      out.at(orow, oc) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace gdsr
