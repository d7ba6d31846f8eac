#include "gdsr/refine_net.hpp"

#include <cmath>

namespace gdsr {

namespace {

struct Reach {
  double alpha = 1.0;  // cumulative scale: input coords per output index
  double lo = 0.0;
  double hi = 0.0;

  // Dependency interval of layer output q on layer input:
  // [s*q - pad, s*q - pad + k - 1].
  void through_conv(int k, int stride, int pad) {
    alpha *= stride;
    lo = stride * lo - pad;
    hi = stride * hi - pad + (k - 1);
  }

  // Nearest upsampling: output q reads input floor(q/f) in
  // [q/f - (f-1)/f, q/f].
  void through_upsample(int f) {
    alpha /= f;
    lo = lo / f - static_cast<double>(f - 1) / f;
    hi = hi / f;
  }
};

}  // namespace

int receptive_field_radius(const RefineNetConfig& config) {
  config.validate();
  const int k = config.kernel_size;
  const int pad = (k - 1) / 2;

  // Walk the architecture from the output back to the input, mirroring
  // RefineNet::forward exactly.
  Reach r;
  r.through_conv(k, 1, pad);  // projection
  for (int i = 0; i < config.n_scale_stages; ++i) {
    r.through_conv(k, 1, pad);
    r.through_upsample(2);
  }
  for (int i = 0; i < 2 * config.n_res_blocks; ++i) r.through_conv(k, 1, pad);
  for (int i = 0; i < config.n_scale_stages; ++i) r.through_conv(k, 2, pad);
  r.through_conv(k, 1, pad);  // encoder input conv

  return static_cast<int>(std::ceil(std::max(-r.lo, r.hi)));
}

}  // namespace gdsr
