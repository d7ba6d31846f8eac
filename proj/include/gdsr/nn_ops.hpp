#pragma once

#include <Eigen/Dense>

#include "gdsr/tensor.hpp"

namespace gdsr {

namespace detail {

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unpacks one image of a padded input into a [C*kh*kw, P] patch matrix,
/// P = out_h*out_w. Out-of-bounds taps contribute zeros.
template <typename S>
void im2col(const S* x, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t out_h, int64_t out_w,
            MatrixRM<S>& cols) {
  cols.setZero();
  for (int64_t c = 0; c < c_in; ++c) {
    const S* plane = x + c * h * w;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        S* row = cols.data() + ((c * kh + ki) * kw + kj) * out_h * out_w;
        for (int64_t oh = 0; oh < out_h; ++oh) {
          int64_t ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          const S* src = plane + ih * w;
          S* dst = row + oh * out_w;
          for (int64_t ow = 0; ow < out_w; ++ow) {
            int64_t iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[ow] = src[iw];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds patch-matrix gradients back onto the
/// input image.
template <typename S>
void col2im(const MatrixRM<S>& cols, int64_t c_in, int64_t h, int64_t w, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t out_h, int64_t out_w,
            S* gx) {
  for (int64_t c = 0; c < c_in; ++c) {
    S* plane = gx + c * h * w;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const S* row = cols.data() + ((c * kh + ki) * kw + kj) * out_h * out_w;
        for (int64_t oh = 0; oh < out_h; ++oh) {
          int64_t ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          S* dst = plane + ih * w;
          const S* src = row + oh * out_w;
          for (int64_t ow = 0; ow < out_w; ++ow) {
            int64_t iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation of x [N,C,H,W] with weights [K,C,kh,kw] plus bias
/// [K], as a single im2col + matrix product per image. Output spatial size
/// is (H + 2*padding - kh)/stride + 1 (floored).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 int64_t stride = 1, int64_t padding = 0) {
  detail::expect_rank(x.shape(), 4, "conv2d input");
  detail::expect_rank(weight.shape(), 4, "conv2d weight");
  detail::expect_rank(bias.shape(), 1, "conv2d bias");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t k = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c_in)
    throw ShapeError("conv2d: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  if (bias.dim(0) != k)
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  const int64_t out_h = (h + 2 * padding - kh) / stride + 1;
  const int64_t out_w = (w + 2 * padding - kw) / stride + 1;
  if (h + 2 * padding < kh || w + 2 * padding < kw)
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) +
                     " does not fit padded input " + shape_str(x.shape()));

  const int64_t ckk = c_in * kh * kw;
  const int64_t p = out_h * out_w;
  typename Tensor<S>::Array out_values(n * k * p);
  Eigen::Map<const detail::MatrixRM<S>> wm(weight.values().data(), k, ckk);
  detail::MatrixRM<S> cols(ckk, p);
  for (int64_t img = 0; img < n; ++img) {
    detail::im2col(x.values().data() + img * c_in * h * w, c_in, h, w, kh, kw, stride,
                   padding, out_h, out_w, cols);
    Eigen::Map<detail::MatrixRM<S>> om(out_values.data() + img * k * p, k, p);
    om.noalias() = wm * cols;
    for (int64_t kk = 0; kk < k; ++kk) om.row(kk).array() += bias.values()(kk);
  }

  auto backprop = [stride, padding, n, c_in, h, w, k, kh, kw, out_h, out_w, ckk,
                   p](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    auto& bn = *node.parents[2];
    Eigen::Map<const detail::MatrixRM<S>> wm(wn.values.data(), k, ckk);
    detail::MatrixRM<S> cols(ckk, p);
    detail::MatrixRM<S> gcols(ckk, p);
    if (wn.requires_grad) wn.ensure_grad();
    if (bn.requires_grad) bn.ensure_grad();
    if (xn.requires_grad) xn.ensure_grad();
    for (int64_t img = 0; img < n; ++img) {
      Eigen::Map<const detail::MatrixRM<S>> gm(node.grad.data() + img * k * p, k, p);
      if (wn.requires_grad || bn.requires_grad) {
        detail::im2col(xn.values.data() + img * c_in * h * w, c_in, h, w, kh, kw, stride,
                       padding, out_h, out_w, cols);
        if (wn.requires_grad) {
          Eigen::Map<detail::MatrixRM<S>> gw(wn.grad.data(), k, ckk);
          gw.noalias() += gm * cols.transpose();
        }
        if (bn.requires_grad) {
          for (int64_t kk = 0; kk < k; ++kk) bn.grad(kk) += gm.row(kk).sum();
        }
      }
      if (xn.requires_grad) {
        gcols.noalias() = wm.transpose() * gm;
        detail::col2im(gcols, c_in, h, w, kh, kw, stride, padding, out_h, out_w,
                       xn.grad.data() + img * c_in * h * w);
      }
    }
  };
  return detail::make_op<S>("conv2d", {n, k, out_h, out_w}, std::move(out_values),
                            {x, weight, bias}, backprop);
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  typename Tensor<S>::Array v = x.values().max(S{0});
  auto backprop = [](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    // Subgradient at 0 is 0.
    xn.grad += (xn.values > S{0}).select(node.grad, S{0});
  };
  return detail::make_op<S>("relu", x.shape(), std::move(v), {x}, backprop);
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  typename Tensor<S>::Array v = (x.values() > S{0}).select(x.values(), slope * x.values());
  auto backprop = [slope](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += (xn.values > S{0}).select(node.grad, slope * node.grad);
  };
  return detail::make_op<S>("leaky_relu", x.shape(), std::move(v), {x}, backprop);
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  typename Tensor<S>::Array v = a.values() + b.values();
  auto backprop = [](TensorNode<S>& node) {
    for (auto& p : node.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad += node.grad;
    }
  };
  return detail::make_op<S>("add", a.shape(), std::move(v), {a, b}, backprop);
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  typename Tensor<S>::Array v = x.values() * factor;
  auto backprop = [factor](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += factor * node.grad;
  };
  return detail::make_op<S>("scale", x.shape(), std::move(v), {x}, backprop);
}

/// Concatenates along the channel axis: [N,Ca,H,W] + [N,Cb,H,W] ->
/// [N,Ca+Cb,H,W].
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  detail::expect_rank(a.shape(), 4, "concat_channels");
  detail::expect_rank(b.shape(), 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  typename Tensor<S>::Array v(n * (ca + cb) * hw);
  for (int64_t img = 0; img < n; ++img) {
    v.segment(img * (ca + cb) * hw, ca * hw) = a.values().segment(img * ca * hw, ca * hw);
    v.segment(img * (ca + cb) * hw + ca * hw, cb * hw) =
        b.values().segment(img * cb * hw, cb * hw);
  }
  auto backprop = [n, ca, cb, hw](TensorNode<S>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    for (int64_t img = 0; img < n; ++img) {
      if (an.requires_grad) {
        an.ensure_grad();
        an.grad.segment(img * ca * hw, ca * hw) +=
            node.grad.segment(img * (ca + cb) * hw, ca * hw);
      }
      if (bn.requires_grad) {
        bn.ensure_grad();
        bn.grad.segment(img * cb * hw, cb * hw) +=
            node.grad.segment(img * (ca + cb) * hw + ca * hw, cb * hw);
      }
    }
  };
  return detail::make_op<S>("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)},
                            std::move(v), {a, b}, backprop);
}

/// Nearest-neighbor upsampling by an integer factor on H and W.
template <typename S>
Tensor<S> upsample_nearest(const Tensor<S>& x, int64_t factor) {
  detail::expect_rank(x.shape(), 4, "upsample_nearest");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h * factor, ow = w * factor;
  typename Tensor<S>::Array v(n * c * oh * ow);
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const S* src = x.values().data() + plane * h * w;
    S* dst = v.data() + plane * oh * ow;
    for (int64_t r = 0; r < oh; ++r) {
      const S* srow = src + (r / factor) * w;
      S* drow = dst + r * ow;
      for (int64_t col = 0; col < ow; ++col) drow[col] = srow[col / factor];
    }
  }
  auto backprop = [n, c, h, w, factor, oh, ow](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (int64_t plane = 0; plane < n * c; ++plane) {
      const S* g = node.grad.data() + plane * oh * ow;
      S* gx = xn.grad.data() + plane * h * w;
      for (int64_t r = 0; r < oh; ++r) {
        const S* grow = g + r * ow;
        S* gxrow = gx + (r / factor) * w;
        for (int64_t col = 0; col < ow; ++col) gxrow[col / factor] += grow[col];
      }
    }
  };
  return detail::make_op<S>("upsample_nearest", {n, c, oh, ow}, std::move(v), {x},
                            backprop);
}

/// Non-overlapping factor x factor mean pooling; H and W must divide evenly.
template <typename S>
Tensor<S> avgpool(const Tensor<S>& x, int64_t factor) {
  detail::expect_rank(x.shape(), 4, "avgpool");
  if (factor < 1) throw ShapeError("avgpool: factor must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % factor != 0 || w % factor != 0)
    throw ShapeError("avgpool: input " + shape_str(x.shape()) +
                     " not divisible by factor " + std::to_string(factor));
  const int64_t oh = h / factor, ow = w / factor;
  const S inv = S{1} / static_cast<S>(factor * factor);
  typename Tensor<S>::Array v = Tensor<S>::Array::Zero(n * c * oh * ow);
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const S* src = x.values().data() + plane * h * w;
    S* dst = v.data() + plane * oh * ow;
    for (int64_t r = 0; r < h; ++r) {
      const S* srow = src + r * w;
      S* drow = dst + (r / factor) * ow;
      for (int64_t col = 0; col < w; ++col) drow[col / factor] += srow[col];
    }
  }
  v *= inv;
  auto backprop = [n, c, h, w, factor, oh, ow, inv](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (int64_t plane = 0; plane < n * c; ++plane) {
      const S* g = node.grad.data() + plane * oh * ow;
      S* gx = xn.grad.data() + plane * h * w;
      for (int64_t r = 0; r < h; ++r) {
        const S* grow = g + (r / factor) * ow;
        S* gxrow = gx + r * w;
        for (int64_t col = 0; col < w; ++col) gxrow[col] += grow[col / factor] * inv;
      }
    }
  };
  return detail::make_op<S>("avgpool", {n, c, oh, ow}, std::move(v), {x}, backprop);
}

/// Mean absolute difference, reduced to a scalar (double accumulation).
template <typename S>
Tensor<S> l1_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  double acc = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i)
    acc += std::abs(static_cast<double>(pred.values()(i)) - target.values()(i));
  const S inv_n = S{1} / static_cast<S>(pred.size());
  typename Tensor<S>::Array v =
      Tensor<S>::Array::Constant(1, static_cast<S>(acc / pred.size()));
  auto backprop = [inv_n](TensorNode<S>& node) {
    auto& pn = *node.parents[0];
    auto& tn = *node.parents[1];
    const S g = node.grad(0) * inv_n;
    if (pn.requires_grad) pn.ensure_grad();
    if (tn.requires_grad) tn.ensure_grad();
    for (int64_t i = 0; i < pn.values.size(); ++i) {
      // sign(0) = 0
      S s = pn.values(i) > tn.values(i) ? S{1}
            : pn.values(i) < tn.values(i) ? S{-1}
                                          : S{0};
      if (pn.requires_grad) pn.grad(i) += g * s;
      if (tn.requires_grad) tn.grad(i) -= g * s;
    }
  };
  return detail::make_op<S>("l1_loss", {1}, std::move(v), {pred, target}, backprop);
}

/// Sum of all elements, reduced to a scalar.
template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.values()(i);
  typename Tensor<S>::Array v = Tensor<S>::Array::Constant(1, static_cast<S>(acc));
  auto backprop = [](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad += node.grad(0);
  };
  return detail::make_op<S>("sum", {1}, std::move(v), {x}, backprop);
}

/// Extracts image/channel slice [H,W] from x [N,C,H,W].
template <typename S>
Tensor<S> image_at(const Tensor<S>& x, int64_t img, int64_t channel) {
  detail::expect_rank(x.shape(), 4, "image_at");
  const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (img < 0 || img >= x.dim(0) || channel < 0 || channel >= c)
    throw ShapeError("image_at: index out of range for " + shape_str(x.shape()));
  const int64_t off = (img * c + channel) * h * w;
  typename Tensor<S>::Array v = x.values().segment(off, h * w);
  auto backprop = [off, h, w](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.segment(off, h * w) += node.grad;
  };
  return detail::make_op<S>("image_at", {h, w}, std::move(v), {x}, backprop);
}

/// Extracts the full channel block [C,H,W] of one image from x [N,C,H,W].
template <typename S>
Tensor<S> channels_at(const Tensor<S>& x, int64_t img) {
  detail::expect_rank(x.shape(), 4, "channels_at");
  const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (img < 0 || img >= x.dim(0))
    throw ShapeError("channels_at: index out of range for " + shape_str(x.shape()));
  const int64_t len = c * h * w;
  const int64_t off = img * len;
  typename Tensor<S>::Array v = x.values().segment(off, len);
  auto backprop = [off, len](TensorNode<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.segment(off, len) += node.grad;
  };
  return detail::make_op<S>("channels_at", {c, h, w}, std::move(v), {x}, backprop);
}

/// Stacks [H,W] images into [N,1,H,W].
template <typename S>
Tensor<S> stack_images(const std::vector<Tensor<S>>& images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const Shape& s0 = images.front().shape();
  detail::expect_rank(s0, 2, "stack_images");
  for (const auto& im : images)
    if (im.shape() != s0)
      throw ShapeError("stack_images: mismatched image shapes " + shape_str(s0) + " vs " +
                       shape_str(im.shape()));
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t hw = numel(s0);
  typename Tensor<S>::Array v(n * hw);
  for (int64_t i = 0; i < n; ++i) v.segment(i * hw, hw) = images[i].values();
  auto backprop = [hw](TensorNode<S>& node) {
    for (size_t i = 0; i < node.parents.size(); ++i) {
      auto& p = *node.parents[i];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad += node.grad.segment(static_cast<int64_t>(i) * hw, hw);
    }
  };
  return detail::make_op<S>("stack_images", {n, 1, s0[0], s0[1]}, std::move(v), images,
                            backprop);
}

}  // namespace gdsr
