#pragma once

#include <span>

#include "gdsr/raster.hpp"
#include "gdsr/tensor.hpp"

namespace gdsr {

/// Constants of the guided diffusion loop. lambda is the explicit step
/// rate, bounded below 0.25 so a four-neighbour update stays a convex
/// combination; K sets the guide-contrast sensitivity of the diffusivity.
/// n_steps_grad of the n_steps_total steps carry gradients during training
/// (the leading steps run detached).
struct DiffusionParams {
  double lambda = 0.24;
  double k = 0.001;
  int n_steps_total = 8000;
  int n_steps_grad = 1024;

  void validate() const {
    if (!(lambda > 0.0 && lambda < 0.25))
      throw ConfigError("diffusion: lambda must lie in (0, 0.25)");
    if (!(k > 0.0)) throw ConfigError("diffusion: K must be positive");
    if (n_steps_total < 0 || n_steps_grad < 0 || n_steps_grad > n_steps_total)
      throw ConfigError("diffusion: step counts must satisfy 0 <= grad <= total");
  }
};

/// Diffusivity of a neighbour pair from its guide values:
///   c(gp, gn) = K^2 / (K^2 + ||gp - gn||^2).
/// Lies in (0, 1], equals 1 iff gp == gn, and is symmetric.
inline double diffusion_coefficient(std::span<const double> gp, std::span<const double> gn,
                                    double k) {
  double d2 = 0.0;
  for (size_t i = 0; i < gp.size(); ++i) {
    double d = gp[i] - gn[i];
    d2 += d * d;
  }
  return k * k / (k * k + d2);
}

/// Per-edge diffusivities of an H x W grid: horiz holds the coefficient of
/// the edge (r,c)-(r,c+1) as an [H, W-1] tensor, vert the edge
/// (r,c)-(r+1,c) as [H-1, W]. Shared edge coefficients make every step
/// symmetric, which is what conserves the pixel sum.
template <typename S>
struct EdgeCoefficients {
  Tensor<S> horiz;
  Tensor<S> vert;

  int64_t grid_h() const { return vert.size() ? vert.dim(0) + 1 : horiz.dim(0); }
  int64_t grid_w() const { return horiz.size() ? horiz.dim(1) + 1 : vert.dim(1); }
};

/// Edge coefficients from a (normalized) guide raster; constants, no graph.
template <typename S>
EdgeCoefficients<S> edge_coefficients(const GuideRaster& guide, double k) {
  guide.validate();
  const int h = guide.height, w = guide.width, cs = guide.channels;
  const double k2 = k * k;
  typename Tensor<S>::Array ch(static_cast<int64_t>(h) * (w - 1));
  typename Tensor<S>::Array cv(static_cast<int64_t>(h - 1) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c + 1 < w; ++c) {
      double d2 = 0.0;
      for (int q = 0; q < cs; ++q) {
        double d = static_cast<double>(guide.at(r, c, q)) - guide.at(r, c + 1, q);
        d2 += d * d;
      }
      ch(static_cast<int64_t>(r) * (w - 1) + c) = static_cast<S>(k2 / (k2 + d2));
    }
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c < w; ++c) {
      double d2 = 0.0;
      for (int q = 0; q < cs; ++q) {
        double d = static_cast<double>(guide.at(r, c, q)) - guide.at(r + 1, c, q);
        d2 += d * d;
      }
      cv(static_cast<int64_t>(r) * w + c) = static_cast<S>(k2 / (k2 + d2));
    }
  EdgeCoefficients<S> out;
  out.horiz = Tensor<S>::from_array({h, w - 1}, std::move(ch));
  out.vert = Tensor<S>::from_array({h - 1, w}, std::move(cv));
  return out;
}

/// Differentiable edge coefficients from a feature tensor [C,H,W]; this is
/// the learned-diffusivity path, where gradients flow back into the
/// feature extractor.
template <typename S>
EdgeCoefficients<S> edge_coefficients(const Tensor<S>& features, S k) {
  detail::expect_rank(features.shape(), 3, "edge_coefficients");
  const int64_t cs = features.dim(0), h = features.dim(1), w = features.dim(2);
  const S k2 = k * k;
  typename Tensor<S>::Array ch(h * (w - 1));
  typename Tensor<S>::Array cv((h - 1) * w);
  const S* f = features.values().data();
  auto at = [&](int64_t q, int64_t r, int64_t c) { return f[(q * h + r) * w + c]; };
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c + 1 < w; ++c) {
      S d2{0};
      for (int64_t q = 0; q < cs; ++q) {
        S d = at(q, r, c) - at(q, r, c + 1);
        d2 += d * d;
      }
      ch(r * (w - 1) + c) = k2 / (k2 + d2);
    }
  for (int64_t r = 0; r + 1 < h; ++r)
    for (int64_t c = 0; c < w; ++c) {
      S d2{0};
      for (int64_t q = 0; q < cs; ++q) {
        S d = at(q, r, c) - at(q, r + 1, c);
        d2 += d * d;
      }
      cv(r * w + c) = k2 / (k2 + d2);
    }

  // dc/d(feature) factors through dc/dd2 = -c^2 / K^2.
  auto back_h = [cs, h, w, k2](TensorNode<S>& node) {
    auto& fn = *node.parents[0];
    if (!fn.requires_grad) return;
    fn.ensure_grad();
    const S* f = fn.values.data();
    for (int64_t r = 0; r < h; ++r)
      for (int64_t c = 0; c + 1 < w; ++c) {
        const S cval = node.values(r * (w - 1) + c);
        const S gc = node.grad(r * (w - 1) + c) * (-cval * cval / k2);
        for (int64_t q = 0; q < cs; ++q) {
          const int64_t ia = (q * h + r) * w + c, ib = ia + 1;
          const S d2g = S{2} * (f[ia] - f[ib]) * gc;
          fn.grad(ia) += d2g;
          fn.grad(ib) -= d2g;
        }
      }
  };
  auto back_v = [cs, h, w, k2](TensorNode<S>& node) {
    auto& fn = *node.parents[0];
    if (!fn.requires_grad) return;
    fn.ensure_grad();
    const S* f = fn.values.data();
    for (int64_t r = 0; r + 1 < h; ++r)
      for (int64_t c = 0; c < w; ++c) {
        const S cval = node.values(r * w + c);
        const S gc = node.grad(r * w + c) * (-cval * cval / k2);
        for (int64_t q = 0; q < cs; ++q) {
          const int64_t ia = (q * h + r) * w + c, ib = ia + w;
          const S d2g = S{2} * (f[ia] - f[ib]) * gc;
          fn.grad(ia) += d2g;
          fn.grad(ib) -= d2g;
        }
      }
  };
  EdgeCoefficients<S> out;
  out.horiz = detail::make_op<S>("edge_coefficients_h", {h, w - 1}, std::move(ch),
                                 {features}, back_h);
  out.vert = detail::make_op<S>("edge_coefficients_v", {h - 1, w}, std::move(cv),
                                {features}, back_v);
  return out;
}

namespace detail {

/// One explicit Jacobi update on a raw field: for every edge e = (p, q),
/// lambda * c_e * (x_q - x_p) flows from q to p. Neighbours outside the
/// grid are omitted (homogeneous Neumann boundary).
template <typename S>
void diffusion_step_raw(const typename Tensor<S>::Array& x, const S* ch, const S* cv,
                        int64_t h, int64_t w, S lambda,
                        typename Tensor<S>::Array& out) {
  out = x;
  for (int64_t r = 0; r < h; ++r) {
    const S* xr = x.data() + r * w;
    S* or_ = out.data() + r * w;
    const S* cr = ch + r * (w - 1);
    for (int64_t c = 0; c + 1 < w; ++c) {
      const S flux = lambda * cr[c] * (xr[c + 1] - xr[c]);
      or_[c] += flux;
      or_[c + 1] -= flux;
    }
  }
  for (int64_t r = 0; r + 1 < h; ++r) {
    const S* xr = x.data() + r * w;
    const S* xn = xr + w;
    S* or_ = out.data() + r * w;
    S* on = or_ + w;
    const S* cr = cv + r * w;
    for (int64_t c = 0; c < w; ++c) {
      const S flux = lambda * cr[c] * (xn[c] - xr[c]);
      or_[c] += flux;
      on[c] -= flux;
    }
  }
}

}  // namespace detail

/// Differentiable diffusion step on x [H,W]. The update is linear in x, so
/// the x-gradient is the same (symmetric) stencil applied to the incoming
/// gradient; coefficient gradients need the pre-step field, which lives in
/// the parent node.
template <typename S>
Tensor<S> diffusion_step(const Tensor<S>& x, const EdgeCoefficients<S>& coeffs, S lambda) {
  detail::expect_rank(x.shape(), 2, "diffusion_step");
  const int64_t h = x.dim(0), w = x.dim(1);
  if (coeffs.horiz.dim(0) != h || coeffs.horiz.dim(1) != w - 1 ||
      coeffs.vert.dim(0) != h - 1 || coeffs.vert.dim(1) != w)
    throw ShapeError("diffusion_step: coefficients do not match grid " +
                     shape_str(x.shape()));

  typename Tensor<S>::Array out(h * w);
  detail::diffusion_step_raw<S>(x.values(), coeffs.horiz.values().data(),
                                coeffs.vert.values().data(), h, w, lambda, out);

  auto backprop = [h, w, lambda](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    auto& chn = *node.parents[1];
    auto& cvn = *node.parents[2];
    const S* g = node.grad.data();
    if (xn.requires_grad) {
      xn.ensure_grad();
      typename Tensor<S>::Array gx(h * w);
      detail::diffusion_step_raw<S>(node.grad, chn.values.data(), cvn.values.data(), h, w,
                                    lambda, gx);
      xn.grad += gx;
    }
    if (chn.requires_grad) {
      chn.ensure_grad();
      for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c + 1 < w; ++c) {
          const S diff = xn.values(r * w + c + 1) - xn.values(r * w + c);
          chn.grad(r * (w - 1) + c) += lambda * diff * (g[r * w + c] - g[r * w + c + 1]);
        }
    }
    if (cvn.requires_grad) {
      cvn.ensure_grad();
      for (int64_t r = 0; r + 1 < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
          const S diff = xn.values((r + 1) * w + c) - xn.values(r * w + c);
          cvn.grad(r * w + c) += lambda * diff * (g[r * w + c] - g[(r + 1) * w + c]);
        }
    }
  };
  return detail::make_op<S>("diffusion_step", {h, w}, std::move(out),
                            {x, coeffs.horiz, coeffs.vert}, backprop);
}

/// Runs the full diffusion loop. The first n_steps_total - n_steps_grad
/// steps run detached on raw arrays (no graph, no gradients); the final
/// n_steps_grad steps build graph nodes so backpropagation reaches the
/// coefficients (and x0 when no step is detached). Coefficients are
/// computed once by the caller and reused: the guide does not evolve.
template <typename S>
Tensor<S> run_diffusion(const Tensor<S>& x0, const EdgeCoefficients<S>& coeffs,
                        const DiffusionParams& params) {
  params.validate();
  detail::expect_rank(x0.shape(), 2, "run_diffusion");
  if (params.n_steps_total == 0) return x0;
  const int64_t h = x0.dim(0), w = x0.dim(1);
  const S lambda = static_cast<S>(params.lambda);
  const int n_detached = params.n_steps_total - params.n_steps_grad;

  Tensor<S> x = x0;
  if (n_detached > 0) {
    typename Tensor<S>::Array cur = x0.values();
    typename Tensor<S>::Array next(h * w);
    for (int t = 0; t < n_detached; ++t) {
      detail::diffusion_step_raw<S>(cur, coeffs.horiz.values().data(),
                                    coeffs.vert.values().data(), h, w, lambda, next);
      cur.swap(next);
    }
    detail::check_finite<S>(cur, "diffusion_step");
    x = Tensor<S>::from_array({h, w}, std::move(cur));
  }
  for (int t = 0; t < params.n_steps_grad; ++t) x = diffusion_step(x, coeffs, lambda);
  return x;
}

/// Evolving field plus step counter, for callers that iterate manually.
template <typename S>
struct DiffusionState {
  Tensor<S> x;
  int t = 0;
};

template <typename S>
DiffusionState<S> diffusion_step(const DiffusionState<S>& state, const GuideRaster& guide,
                                 const DiffusionParams& params) {
  params.validate();
  detail::expect_rank(state.x.shape(), 2, "diffusion_step");
  if (guide.height != state.x.dim(0) || guide.width != state.x.dim(1))
    throw ShapeError("diffusion_step: guide " + std::to_string(guide.height) + "x" +
                     std::to_string(guide.width) + " does not match field " +
                     shape_str(state.x.shape()));
  auto coeffs = edge_coefficients<S>(guide, params.k);
  return {diffusion_step(state.x, coeffs, static_cast<S>(params.lambda)), state.t + 1};
}

template <typename S>
Tensor<S> run_diffusion(const Tensor<S>& x0, const GuideRaster& guide,
                        const DiffusionParams& params) {
  if (guide.height != x0.dim(0) || guide.width != x0.dim(1))
    throw ShapeError("run_diffusion: guide dims do not match field " +
                     shape_str(x0.shape()));
  auto coeffs = edge_coefficients<S>(guide, params.k);
  return run_diffusion(x0, coeffs, params);
}

}  // namespace gdsr
