#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>

#include "zonalseg/gradcheck.hpp"
#include "zonalseg/rng.hpp"
#include "zonalseg/tape.hpp"

using namespace zonalseg;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Direct quadruple-loop convolution, independent of the tape path.
Tensor conv2d_oracle(const Tensor& in, const Tensor& k, const Tensor& bias,
                     bool same_padding) {
  const std::size_t B = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t Co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t Ho = same_padding ? H : H - kh + 1;
  const std::size_t Wo = same_padding ? W : W - kw + 1;
  const std::ptrdiff_t ph = same_padding ? static_cast<std::ptrdiff_t>(kh / 2) : 0;
  const std::ptrdiff_t pw = same_padding ? static_cast<std::ptrdiff_t>(kw / 2) : 0;

  Tensor out({B, Co, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Co; ++co) {
      for (std::size_t y = 0; y < Ho; ++y) {
        for (std::size_t x = 0; x < Wo; ++x) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            for (std::size_t dy = 0; dy < kh; ++dy) {
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - ph;
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) - pw;
                if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(H) ||
                    sx >= static_cast<std::ptrdiff_t>(W)) {
                  continue;
                }
                acc += in[idx4(in.shape(), b, ci, sy, sx)] *
                       k[idx4(k.shape(), co, ci, dy, dx)];
              }
            }
          }
          out[idx4(out.shape(), b, co, y, x)] = acc;
        }
      }
    }
  }
  return out;
}

Tensor tape_conv(const Tensor& in, const Tensor& k, const Tensor& bias,
                 Padding pad = Padding::same) {
  Tape t;
  return t.value(t.conv2d(t.constant(in), t.constant(k), t.constant(bias), pad));
}

}  // namespace

TEST_SUITE_BEGIN("tensor_tape");

TEST_CASE("tensor shape and data invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  t[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d identity on a single pixel") {
  const Tensor in({1, 1, 1, 1}, {5.0});
  const Tensor k({1, 1, 1, 1}, {1.0});
  const Tensor bias({1}, {0.0});
  const Tensor out = tape_conv(in, k, bias);
  CHECK(out[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d counts overlapped ones under same padding") {
  const Tensor in = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor bias({1}, {0.0});
  const Tensor out = tape_conv(in, k, bias);
  CHECK(out[idx4(out.shape(), 0, 0, 1, 1)] == doctest::Approx(9.0));
  CHECK(out[idx4(out.shape(), 0, 0, 0, 0)] == doctest::Approx(4.0));
  CHECK(out[idx4(out.shape(), 0, 0, 0, 2)] == doctest::Approx(4.0));
}

TEST_CASE("conv2d matches the direct-summation oracle") {
  Rng rng(42);
  const Tensor in = random_tensor(rng, {1, 2, 5, 5});
  const Tensor k = random_tensor(rng, {3, 2, 3, 3});
  const Tensor bias = random_tensor(rng, {3});
  for (const bool same : {true, false}) {
    const Tensor got = tape_conv(in, k, bias, same ? Padding::same : Padding::valid);
    const Tensor want = conv2d_oracle(in, k, bias, same);
    CHECK(got.max_abs_diff(want) < 1e-12);
  }
}

TEST_CASE("conv2d rejects mismatched shapes with a diagnostic") {
  Tape t;
  const VarId in = t.constant(Tensor({1, 3, 4, 4}));
  const VarId k = t.constant(Tensor({2, 2, 3, 3}));
  const VarId bias = t.constant(Tensor({2}));
  CHECK_THROWS_WITH_AS(t.conv2d(in, k, bias),
                       doctest::Contains("input channels 3"), std::invalid_argument);
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(7);
  const Tensor k = random_tensor(rng, {2, 2, 3, 3});
  const Tensor bias({2});  // zero
  const Tensor x = random_tensor(rng, {1, 2, 6, 6});
  const Tensor y = random_tensor(rng, {1, 2, 6, 6});
  const double a = 1.7, b = -0.4;

  Tensor combo(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) combo[i] = a * x[i] + b * y[i];
  const Tensor lhs = tape_conv(combo, k, bias);
  const Tensor cx = tape_conv(x, k, bias);
  const Tensor cy = tape_conv(y, k, bias);
  Tensor rhs(lhs.shape());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * cx[i] + b * cy[i];
  CHECK(lhs.max_abs_diff(rhs) < 1e-10);
}

TEST_CASE("max_pool_2x2 basics") {
  Tape t;
  const Tensor in({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.value(t.max_pool_2x2(t.constant(in)))[0] == doctest::Approx(4.0));

  const Tensor c = Tensor::full({1, 1, 4, 4}, 2.5);
  const Tensor pooled = t.value(t.max_pool_2x2(t.constant(c)));
  CHECK(pooled.shape() == Shape{1, 1, 2, 2});
  for (std::size_t i = 0; i < pooled.size(); ++i) CHECK(pooled[i] == doctest::Approx(2.5));

  CHECK_THROWS_AS(t.max_pool_2x2(t.constant(Tensor({1, 1, 3, 4}))), std::invalid_argument);
}

TEST_CASE("max_pool_2x2 matches a window-scan oracle") {
  Rng rng(11);
  const Tensor in = random_tensor(rng, {2, 3, 8, 8});
  Tape t;
  const Tensor out = t.value(t.max_pool_2x2(t.constant(in)));
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
          const double want = std::max(
              std::max(in[idx4(in.shape(), b, c, 2 * y, 2 * x)],
                       in[idx4(in.shape(), b, c, 2 * y, 2 * x + 1)]),
              std::max(in[idx4(in.shape(), b, c, 2 * y + 1, 2 * x)],
                       in[idx4(in.shape(), b, c, 2 * y + 1, 2 * x + 1)]));
          CHECK(out[idx4(out.shape(), b, c, y, x)] == want);
        }
      }
    }
  }
}

TEST_CASE("max_pool_2x2 routes gradient to the first maximum on ties") {
  Tape t;
  const VarId x = t.input(Tensor({1, 1, 2, 2}, {3.0, 3.0, 3.0, 3.0}));
  t.backward(t.sum(t.max_pool_2x2(x)));
  const Tensor& g = t.grad(x);
  CHECK(g[0] == 1.0);  // row-major first
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("conv_transpose_2x2 expands a single site to the kernel") {
  Tape t;
  const Tensor in({1, 1, 1, 1}, {1.0});
  const Tensor k({1, 1, 2, 2}, {2.0, 3.0, 4.0, 5.0});
  const Tensor out = t.value(t.conv_transpose_2x2(t.constant(in), t.constant(k)));
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 3.0);
  CHECK(out[2] == 4.0);
  CHECK(out[3] == 5.0);
}

TEST_CASE("conv_transpose_2x2 of zero input is zero at doubled size") {
  Tape t;
  Rng rng(3);
  const Tensor k = random_tensor(rng, {2, 3, 2, 2});
  const Tensor out =
      t.value(t.conv_transpose_2x2(t.constant(Tensor({1, 2, 3, 5})), t.constant(k)));
  CHECK(out.shape() == Shape{1, 3, 6, 10});
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("conv_transpose_2x2 matches a scatter-accumulate oracle") {
  Rng rng(13);
  const Tensor in = random_tensor(rng, {2, 3, 4, 5});
  const Tensor k = random_tensor(rng, {3, 2, 2, 2});
  Tape t;
  const Tensor got = t.value(t.conv_transpose_2x2(t.constant(in), t.constant(k)));

  Tensor want({2, 2, 8, 10});
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t ci = 0; ci < 3; ++ci) {
      for (std::size_t co = 0; co < 2; ++co) {
        for (std::size_t y = 0; y < 4; ++y) {
          for (std::size_t x = 0; x < 5; ++x) {
            for (std::size_t dy = 0; dy < 2; ++dy) {
              for (std::size_t dx = 0; dx < 2; ++dx) {
                want[idx4(want.shape(), b, co, 2 * y + dy, 2 * x + dx)] +=
                    in[idx4(in.shape(), b, ci, y, x)] *
                    k[idx4(k.shape(), ci, co, dy, dx)];
              }
            }
          }
        }
      }
    }
  }
  CHECK(got.max_abs_diff(want) < 1e-12);
}

TEST_CASE("global_avg_pool basics and oracle") {
  Tape t;
  const Tensor in({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.value(t.global_avg_pool(t.constant(in)))[0] == doctest::Approx(2.5));

  const Tensor c = Tensor::full({1, 2, 3, 3}, -1.25);
  const Tensor pooled = t.value(t.global_avg_pool(t.constant(c)));
  CHECK(pooled[0] == doctest::Approx(-1.25));
  CHECK(pooled[1] == doctest::Approx(-1.25));

  Rng rng(17);
  const Tensor r = random_tensor(rng, {1, 3, 7, 5});
  const Tensor got = t.value(t.global_avg_pool(t.constant(r)));
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0.0, lo = 1e300, hi = -1e300;
    for (std::size_t y = 0; y < 7; ++y) {
      for (std::size_t x = 0; x < 5; ++x) {
        const double v = r[idx4(r.shape(), 0, ch, y, x)];
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    CHECK(std::abs(got[ch] - sum / 35.0) < 1e-14);
    CHECK(got[ch] >= lo);  // mean lies within the channel's range
    CHECK(got[ch] <= hi);
  }
}

TEST_CASE("matmul basics and triple-loop oracle") {
  Tape t;
  Rng rng(19);
  const Tensor x = random_tensor(rng, {3, 3});
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  CHECK(t.value(t.matmul(t.constant(x), t.constant(eye))).max_abs_diff(x) == 0.0);
  CHECK(t.value(t.matmul(t.constant(x), t.constant(Tensor({3, 2}))))
            .max_abs_diff(Tensor({3, 2})) == 0.0);

  const Tensor a = random_tensor(rng, {4, 6});
  const Tensor b = random_tensor(rng, {6, 3});
  const Tensor got = t.value(t.matmul(t.constant(a), t.constant(b)));
  Tensor want({4, 3});
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t r = 0; r < 3; ++r) {
      double acc = 0.0;
      for (std::size_t q = 0; q < 6; ++q) acc += a[p * 6 + q] * b[q * 3 + r];
      want[p * 3 + r] = acc;
    }
  }
  CHECK(got.max_abs_diff(want) < 1e-12);

  CHECK_THROWS_AS(t.matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({4, 2}))),
                  std::invalid_argument);
}

TEST_CASE("activations") {
  Tape t;
  const Tensor in({4}, {-3.0, 2.0, 0.0, 20.0});
  const Tensor r = t.value(t.activation(t.constant(in), Activation::relu));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);
  CHECK(r[2] == 0.0);

  const Tensor s0 = t.value(t.activation(t.constant(Tensor({1}, {0.0})), Activation::sigmoid));
  CHECK(s0[0] == doctest::Approx(0.5));

  const Tensor sat = t.value(
      t.activation(t.constant(Tensor({2}, {20.0, -20.0})), Activation::sigmoid));
  CHECK(sat[0] > 0.0);
  CHECK(sat[0] < 1.0);
  CHECK(sat[1] > 0.0);
  CHECK(sat[1] < 1.0);
}

TEST_CASE("sigmoid gradient matches the closed form") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const double x = rng.uniform(-20.0, 20.0);
    Tape t;
    const VarId in = t.input(Tensor({1}, {x}));
    t.backward(t.activation(in, Activation::sigmoid));
    const double s = sigmoid(x);
    CHECK(std::abs(t.grad(in)[0] - s * (1.0 - s)) < 1e-10);
  }
}

TEST_CASE("gradient_check on simple closed forms") {
  // f(x) = x^2 at x = 3: analytic gradient 6.
  const auto square = [](Tape& t, VarId x) { return t.sum(t.multiply(x, x)); };
  const auto res = gradient_check(square, Tensor({1}, {3.0}), 1e-5);
  CHECK(res.max_rel_error < 1e-9);
  CHECK(res.analytic_at_worst == doctest::Approx(6.0));

  Rng rng(29);
  Tensor point({10});
  for (std::size_t i = 0; i < 10; ++i) point[i] = rng.uniform(-2.0, 2.0);
  const auto sum_sigmoid = [](Tape& t, VarId x) {
    return t.sum(t.activation(x, Activation::sigmoid));
  };
  CHECK(gradient_check(sum_sigmoid, point, 1e-5).max_rel_error < 1e-7);
}

TEST_CASE("gradient_check input validation") {
  const auto ident = [](Tape& t, VarId x) { return t.sum(x); };
  CHECK_THROWS_AS(gradient_check(ident, Tensor({2}), 1e-3), std::invalid_argument);
  Tensor bad({1});
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(gradient_check(ident, bad, 1e-5), std::invalid_argument);
}

TEST_CASE("every registered operation passes gradient_check") {
  for (const auto& check : layer_gradient_checks(1234, 1e-5)) {
    INFO(check.name);
    CHECK(check.max_rel_error < 1e-4);
  }
}

TEST_CASE("forward and backward stay finite on finite inputs") {
  Rng rng(31);
  Tape t;
  const VarId x = t.input(random_tensor(rng, {2, 1, 8, 8}, 0.0, 1.0));
  const VarId k = t.input(random_tensor(rng, {4, 1, 3, 3}));
  const VarId b = t.input(random_tensor(rng, {4}));
  const VarId y = t.activation(t.conv2d(x, k, b), Activation::sigmoid);
  const VarId truth = t.constant(Tensor::full({2, 4, 8, 8}, 1.0));
  const VarId loss = t.dice_loss(y, truth);
  t.backward(loss);
  CHECK(t.value(y).all_finite());
  CHECK(t.grad(x).all_finite());
  CHECK(t.grad(k).all_finite());
  CHECK(t.grad(b).all_finite());
}

TEST_CASE("clearing the tape releases every node") {
  Tape t;
  t.constant(Tensor({4, 4}));
  t.input(Tensor({2}));
  CHECK(t.node_count() == 2);
  t.clear();
  CHECK(t.node_count() == 0);
}

TEST_SUITE_END();
