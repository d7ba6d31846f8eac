#include <doctest.h>

#include <cmath>

#include "gdsr/diffusion.hpp"
#include "gdsr/nn_ops.hpp"
#include "test_util.hpp"

using namespace gdsr;
using namespace gdsr::testutil;

namespace {

GuideRaster constant_guide(int h, int w, float v = 0.5f) { return GuideRaster(h, w, 3, v); }

template <typename S>
Tensor<S> field(int h, int w, std::initializer_list<double> values) {
  typename Tensor<S>::Array a(static_cast<int64_t>(h) * w);
  int i = 0;
  for (double v : values) a(i++) = static_cast<S>(v);
  return Tensor<S>::from_array({h, w}, std::move(a));
}

}  // namespace

TEST_CASE("diffusion coefficient formula") {
  std::vector<double> gp = {0.1, 0.2, 0.3};
  CHECK(diffusion_coefficient(gp, gp, 0.5) == doctest::Approx(1.0));

  // ||gp - gn|| = K sits exactly at the half point.
  std::vector<double> gn = {0.1 + 0.5, 0.2, 0.3};
  CHECK(diffusion_coefficient(gp, gn, 0.5) == doctest::Approx(0.5).epsilon(1e-12));

  std::vector<double> a = {0.0}, b = {3.0};
  CHECK(diffusion_coefficient(a, b, 1.0) == doctest::Approx(0.1).epsilon(1e-12));

  // Symmetry and bounds on random pairs.
  CounterRng rng(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> u = {rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<double> v = {rng.uniform(), rng.uniform(), rng.uniform()};
    double cuv = diffusion_coefficient(u, v, 0.01);
    CHECK(cuv == diffusion_coefficient(v, u, 0.01));
    CHECK(cuv > 0.0);
    CHECK(cuv <= 1.0);
  }
}

TEST_CASE("single step hand cases") {
  DiffusionParams params;
  params.lambda = 0.24;
  params.k = 0.001;
  params.n_steps_total = 1;
  params.n_steps_grad = 0;

  SUBCASE("two-pixel gradient with a constant guide") {
    DiffusionState<double> state{field<double>(1, 2, {0.0, 1.0}), 0};
    auto next = diffusion_step(state, constant_guide(1, 2), params);
    CHECK(next.t == 1);
    CHECK(next.x.values()(0) == doctest::Approx(0.24).epsilon(1e-12));
    CHECK(next.x.values()(1) == doctest::Approx(0.76).epsilon(1e-12));
  }

  SUBCASE("constant field is a fixed point") {
    DiffusionState<double> state{field<double>(2, 2, {3, 3, 3, 3}), 0};
    auto next = diffusion_step(state, random_guide(2, 2, 3, 11), params);
    for (int i = 0; i < 4; ++i) CHECK(next.x.values()(i) == doctest::Approx(3.0));
  }

  SUBCASE("guide contrast of 10K throttles the flux") {
    GuideRaster g(1, 2, 1);
    g.at(0, 0, 0) = 0.0f;
    g.at(0, 1, 0) = 10.0f * 0.001f;
    DiffusionParams p1 = params;
    p1.k = 0.001;
    DiffusionState<double> state{field<double>(1, 2, {0.0, 1.0}), 0};
    auto next = diffusion_step(state, g, p1);
    CHECK(next.x.values()(0) == doctest::Approx(0.24 / 101.0).epsilon(1e-6));
    CHECK(next.x.values()(1) == doctest::Approx(1.0 - 0.24 / 101.0).epsilon(1e-6));
  }

  SUBCASE("guide and field dims must agree") {
    DiffusionState<double> state{field<double>(1, 2, {0.0, 1.0}), 0};
    CHECK_THROWS_AS(diffusion_step(state, constant_guide(2, 2), params), ShapeError);
  }
}

TEST_CASE("run_diffusion limits") {
  SUBCASE("uniform diffusion converges to the mean") {
    DiffusionParams params;
    params.n_steps_total = 10000;
    params.n_steps_grad = 0;
    auto x0 = field<double>(2, 2, {0, 0, 4, 4});
    auto out = run_diffusion(x0, constant_guide(2, 2), params);
    for (int i = 0; i < 4; ++i) CHECK(out.values()(i) == doctest::Approx(2.0).epsilon(1e-3));
  }

  SUBCASE("zero steps returns the input unchanged") {
    DiffusionParams params;
    params.n_steps_total = 0;
    params.n_steps_grad = 0;
    auto x0 = random_tensor<double>({3, 3}, 5);
    auto out = run_diffusion(x0, constant_guide(3, 3), params);
    for (int i = 0; i < 9; ++i) CHECK(out.values()(i) == x0.values()(i));
  }

  SUBCASE("an infinite-contrast edge blocks cross flux") {
    // Guide jumps by 1.0 across the middle: c = K^2/(K^2+1) ~ 1e-6, so the
    // total cross-edge transfer over T steps is bounded by
    // lambda * c * |dx| * T ~ 0.24 * 1e-6 * 4 * 10000 < 0.01.
    const int w = 4, h = 4;
    GuideRaster g(h, w, 1);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) g.at(r, c, 0) = c < w / 2 ? 0.0f : 1.0f;
    typename Tensor<double>::Array a(h * w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) a(r * w + c) = c < w / 2 ? 0.0 : 4.0;
    auto x0 = Tensor<double>::from_array({h, w}, std::move(a));

    DiffusionParams params;
    params.n_steps_total = 10000;
    params.n_steps_grad = 0;
    auto out = run_diffusion(x0, g, params);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (c < w / 2)
          CHECK(out.values()(r * w + c) == doctest::Approx(0.0).epsilon(0.01));
        else
          CHECK(out.values()(r * w + c) == doctest::Approx(4.0).epsilon(0.01));
      }
  }
}

TEST_CASE("mass conservation") {
  SUBCASE("per step at float64") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      auto x = random_tensor<double>({16, 16}, 500 + seed, 1.0, 2.0);
      GuideRaster g = random_guide(16, 16, 3, 600 + seed);
      auto coeffs = edge_coefficients<double>(g, 0.05);
      const double sum0 = x.values().sum();
      auto x1 = diffusion_step(x, coeffs, 0.24);
      CHECK(std::abs(x1.values().sum() - sum0) / std::abs(sum0) < 1e-12);
    }
  }

  SUBCASE("over 1000 steps at float32") {
    auto x = random_tensor<float>({16, 16}, 42, 1.0, 2.0);
    GuideRaster g = random_guide(16, 16, 3, 43);
    DiffusionParams params;
    params.k = 0.05;
    params.n_steps_total = 1000;
    params.n_steps_grad = 0;
    const double sum0 = x.values().cast<double>().sum();
    auto out = run_diffusion(x, g, params);
    const double sum1 = out.values().cast<double>().sum();
    CHECK(std::abs(sum1 - sum0) / std::abs(sum0) < 1e-5);
  }
}

TEST_CASE("max principle holds over 1000 steps at lambda 0.24") {
  auto x = random_tensor<float>({12, 12}, 7, -3.0, 3.0);
  const float lo = x.values().minCoeff(), hi = x.values().maxCoeff();
  GuideRaster g = random_guide(12, 12, 3, 8);
  DiffusionParams params;
  params.lambda = 0.24;
  params.k = 0.05;
  params.n_steps_total = 1000;
  params.n_steps_grad = 0;
  auto out = run_diffusion(x, g, params);
  CHECK(out.values().minCoeff() >= lo - 1e-6f);
  CHECK(out.values().maxCoeff() <= hi + 1e-6f);
}

TEST_CASE("variance is non-increasing under a constant guide") {
  auto x = random_tensor<double>({8, 8}, 17, -1.0, 1.0);
  GuideRaster g = constant_guide(8, 8);
  auto coeffs = edge_coefficients<double>(g, 0.01);
  auto variance = [](const Tensor<double>& t) {
    const double m = t.values().mean();
    return (t.values() - m).square().mean();
  };
  double prev = variance(x);
  Tensor<double> cur = x;
  for (int step = 0; step < 50; ++step) {
    cur = diffusion_step(cur, coeffs, 0.24);
    const double v = variance(cur);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("coefficients from tensor features match the raster path") {
  GuideRaster g = random_guide(6, 5, 3, 77);
  auto from_raster = edge_coefficients<double>(g, 0.01);

  typename Tensor<double>::Array f(3 * 6 * 5);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 5; ++c) f((ch * 6 + r) * 5 + c) = g.at(r, c, ch);
  auto from_tensor = edge_coefficients(Tensor<double>::from_array({3, 6, 5}, f), 0.01);

  for (int64_t i = 0; i < from_raster.horiz.size(); ++i)
    CHECK(from_tensor.horiz.values()(i) ==
          doctest::Approx(from_raster.horiz.values()(i)).epsilon(1e-12));
  for (int64_t i = 0; i < from_raster.vert.size(); ++i)
    CHECK(from_tensor.vert.values()(i) ==
          doctest::Approx(from_raster.vert.values()(i)).epsilon(1e-12));
}

TEST_CASE("gradients through a 3-step unroll match finite differences") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    SUBCASE(("through the field, seed " + std::to_string(seed)).c_str()) {
      auto x0 = random_tensor<double>({4, 4}, 800 + seed, -1, 1);
      auto target = random_tensor<double>({4, 4}, 900 + seed, -1, 1);
      GuideRaster g = random_guide(4, 4, 3, 1000 + seed);
      auto coeffs = edge_coefficients<double>(g, 0.05);
      auto fwd = [&] {
        Tensor<double> x = x0;
        for (int t = 0; t < 3; ++t) x = diffusion_step(x, coeffs, 0.24);
        return l1_loss(x, target);
      };
      CHECK(gradient_check<double>(fwd, {x0}, 1e-6) < 1e-4);
    }

    SUBCASE(("through learned features, seed " + std::to_string(seed)).c_str()) {
      auto feats = random_tensor<double>({2, 4, 4}, 1100 + seed, -0.5, 0.5);
      auto x0 = random_tensor<double>({4, 4}, 1200 + seed, -1, 1);
      auto target = random_tensor<double>({4, 4}, 1300 + seed, -1, 1);
      auto fwd = [&] {
        auto coeffs = edge_coefficients(feats, 0.5);
        Tensor<double> x = x0;
        for (int t = 0; t < 3; ++t) x = diffusion_step(x, coeffs, 0.24);
        return l1_loss(x, target);
      };
      CHECK(gradient_check<double>(fwd, {feats, x0}, 1e-6) < 1e-4);
    }
  }
}

TEST_CASE("truncated gradient window detaches the leading steps") {
  auto x0 = random_tensor<double>({4, 4}, 55, -1, 1, true);
  GuideRaster g = random_guide(4, 4, 3, 56);
  auto coeffs = edge_coefficients<double>(g, 0.05);

  DiffusionParams params;
  params.n_steps_total = 8;
  params.n_steps_grad = 4;
  auto out = run_diffusion(x0, coeffs, params);
  auto loss = sum(out);
  backward(loss);
  CHECK_FALSE(x0.has_grad());  // cut by the detached prefix

  params.n_steps_grad = 8;
  x0.zero_grad();
  auto out2 = run_diffusion(x0, coeffs, params);
  auto loss2 = sum(out2);
  backward(loss2);
  CHECK(x0.has_grad());  // fully attached when grad window covers all steps
}

TEST_CASE("invalid parameters are rejected") {
  DiffusionParams p;
  p.lambda = 0.25;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.lambda = 0.24;
  p.k = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.k = 0.001;
  p.n_steps_grad = p.n_steps_total + 1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
