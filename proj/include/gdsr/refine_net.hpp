#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gdsr/nn_ops.hpp"
#include "gdsr/optimizer.hpp"
#include "gdsr/rng.hpp"
#include "gdsr/tensor.hpp"

namespace gdsr {

/// Shape of the local refinement network. Two scale stages means the
/// encoder downsamples twice (stride-2 convs) and the decoder restores the
/// resolution with two resize-convolution stages; the residual blocks run
/// at the coarsest scale.
struct RefineNetConfig {
  int hidden_dim = 64;
  int n_res_blocks = 4;
  int n_scale_stages = 2;
  int guide_channels = 3;
  int kernel_size = 3;

  void validate() const {
    if (hidden_dim < 8) throw ConfigError("refine net: hidden_dim must be >= 8");
    if (n_res_blocks < 1) throw ConfigError("refine net: n_res_blocks must be >= 1");
    if (n_scale_stages < 0) throw ConfigError("refine net: n_scale_stages must be >= 0");
    if (guide_channels < 1) throw ConfigError("refine net: guide_channels must be >= 1");
    if (kernel_size != 3) throw ConfigError("refine net: kernel_size must be 3");
  }

  /// Spatial granularity the input must divide: 2^n_scale_stages.
  int64_t scale_multiple() const { return int64_t{1} << n_scale_stages; }
};

namespace detail {

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) conv weights, zero bias.
template <typename S>
Parameter<S> init_conv(const std::string& name, int64_t out_c, int64_t in_c, int64_t k,
                       CounterRng& rng, bool zero) {
  typename Tensor<S>::Array w = Tensor<S>::Array::Zero(out_c * in_c * k * k);
  if (!zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c * k * k));
    for (int64_t i = 0; i < w.size(); ++i)
      w(i) = static_cast<S>(rng.uniform(-bound, bound));
  }
  return Parameter<S>(name, Tensor<S>::from_array({out_c, in_c, k, k}, std::move(w)));
}

template <typename S>
Parameter<S> init_bias(const std::string& name, int64_t out_c) {
  return Parameter<S>(name, Tensor<S>::zeros({out_c}));
}

}  // namespace detail

/// Residual local refinement network. Consumes the normalized
/// bicubic-upsampled height channel concatenated with the normalized guide,
/// and regresses a height correction: refined = dsm + residual. The final
/// projection starts at zero, so an untrained network is the identity on
/// the height channel.
template <typename S>
class RefineNet {
 public:
  struct Output {
    Tensor<S> residual;  // projection output, zero at initialization
    Tensor<S> refined;   // dsm_up + residual
  };

  static RefineNet build(const RefineNetConfig& config, uint64_t seed) {
    config.validate();
    RefineNet net;
    net.cfg_ = config;
    CounterRng rng(seed, /*stream=*/1);
    const int64_t hd = config.hidden_dim;
    const int64_t k = config.kernel_size;
    auto conv = [&](const std::string& name, int64_t out_c, int64_t in_c,
                    bool zero = false) {
      net.params_.push_back(detail::init_conv<S>(name + ".w", out_c, in_c, k, rng, zero));
      net.params_.push_back(detail::init_bias<S>(name + ".b", out_c));
    };
    conv("enc_in", hd, 1 + config.guide_channels);
    for (int i = 0; i < config.n_scale_stages; ++i) conv("down" + std::to_string(i), hd, hd);
    for (int i = 0; i < config.n_res_blocks; ++i) {
      conv("res" + std::to_string(i) + ".c1", hd, hd);
      conv("res" + std::to_string(i) + ".c2", hd, hd);
    }
    for (int i = 0; i < config.n_scale_stages; ++i) conv("up" + std::to_string(i), hd, hd);
    conv("proj", 1, hd, /*zero=*/true);
    return net;
  }

  /// dsm_up [N,1,H,W], guide [N,C,H,W] -> same-size residual and refined
  /// output. H and W must be divisible by 2^n_scale_stages.
  Output forward(const Tensor<S>& dsm_up, const Tensor<S>& guide) const {
    detail::expect_rank(dsm_up.shape(), 4, "refine_forward dsm");
    detail::expect_rank(guide.shape(), 4, "refine_forward guide");
    if (dsm_up.dim(1) != 1)
      throw ShapeError("refine_forward: dsm must have 1 channel, got " +
                       shape_str(dsm_up.shape()));
    if (guide.dim(1) != cfg_.guide_channels)
      throw ShapeError("refine_forward: guide has " + std::to_string(guide.dim(1)) +
                       " channels, network expects " + std::to_string(cfg_.guide_channels));
    if (dsm_up.dim(0) != guide.dim(0) || dsm_up.dim(2) != guide.dim(2) ||
        dsm_up.dim(3) != guide.dim(3))
      throw ShapeError("refine_forward: dsm " + shape_str(dsm_up.shape()) +
                       " and guide " + shape_str(guide.shape()) + " disagree");
    const int64_t mult = cfg_.scale_multiple();
    if (dsm_up.dim(2) % mult != 0 || dsm_up.dim(3) % mult != 0)
      throw ShapeError("refine_forward: spatial dims " + shape_str(dsm_up.shape()) +
                       " must be divisible by " + std::to_string(mult));

    size_t pi = 0;
    auto next_conv = [&](const Tensor<S>& x, int64_t stride) {
      const Tensor<S>& w = params_[pi].tensor;
      const Tensor<S>& b = params_[pi + 1].tensor;
      pi += 2;
      return conv2d(x, w, b, stride, /*padding=*/(cfg_.kernel_size - 1) / 2);
    };

    Tensor<S> x = concat_channels(dsm_up, guide);
    x = relu(next_conv(x, 1));
    for (int i = 0; i < cfg_.n_scale_stages; ++i) x = relu(next_conv(x, 2));
    for (int i = 0; i < cfg_.n_res_blocks; ++i) {
      Tensor<S> y = relu(next_conv(x, 1));
      y = next_conv(y, 1);
      x = add(x, y);
    }
    for (int i = 0; i < cfg_.n_scale_stages; ++i)
      x = relu(next_conv(upsample_nearest(x, 2), 1));
    Tensor<S> residual = next_conv(x, 1);
    return {residual, add(residual, dsm_up)};
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  const RefineNetConfig& config() const { return cfg_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

 private:
  RefineNetConfig cfg_;
  std::vector<Parameter<S>> params_;
};

/// Optional two-layer guide encoder for learned diffusivities: conv3 C->16,
/// relu, conv3 16->out (zero-initialized, so coefficients start at 1).
template <typename S>
class DiffusionFeatureEncoder {
 public:
  static constexpr int kHidden = 16;

  static DiffusionFeatureEncoder build(int guide_channels, int feature_dim, uint64_t seed) {
    DiffusionFeatureEncoder enc;
    CounterRng rng(seed, /*stream=*/2);
    enc.params_.push_back(detail::init_conv<S>("dif_enc0.w", kHidden, guide_channels, 3,
                                               rng, false));
    enc.params_.push_back(detail::init_bias<S>("dif_enc0.b", kHidden));
    enc.params_.push_back(
        detail::init_conv<S>("dif_enc1.w", feature_dim, kHidden, 3, rng, true));
    enc.params_.push_back(detail::init_bias<S>("dif_enc1.b", feature_dim));
    return enc;
  }

  /// guide [N,C,H,W] -> features [N,F,H,W]
  Tensor<S> forward(const Tensor<S>& guide) const {
    Tensor<S> x = relu(conv2d(guide, params_[0].tensor, params_[1].tensor, 1, 1));
    return conv2d(x, params_[2].tensor, params_[3].tensor, 1, 1);
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

 private:
  std::vector<Parameter<S>> params_;
};

/// Exact Chebyshev radius (in input pixels) of the set of inputs that can
/// influence one output pixel, from the layer geometry alone: convolutions
/// widen the dependency interval, strided convolutions scale it, nearest
/// upsampling shrinks it with a floor offset. The long skip adds the pixel
/// itself, which the interval already contains.
int receptive_field_radius(const RefineNetConfig& config);

}  // namespace gdsr
