// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "genlip/tensor.hpp"
#include "test_support.hpp"

using namespace genlip;
using genlip::testing::all_coords;
using genlip::testing::check_gradient;
using genlip::testing::random_tensor;
using genlip::testing::reference_matmul;

using TD = Tensor<double>;
using TF = Tensor<float>;

TEST_CASE("matmul identity, annihilator and triple-loop reference") {
  std::mt19937_64 rng(1);
  auto a = random_tensor<double>({3, 3}, rng);
  auto eye = TD::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.data()[i * 4] = 1.0;
  auto ai = matmul(a, eye);
  for (std::size_t i = 0; i < 9; ++i) CHECK(ai.data()[i] == a.data()[i]);

  auto z = matmul(TD::zeros({2, 3}), random_tensor<double>({3, 4}, rng));
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);

  auto x = random_tensor<double>({2, 3}, rng);
  auto y = random_tensor<double>({3, 2}, rng);
  const auto ref = reference_matmul({x.data().begin(), x.data().end()},
                                    {y.data().begin(), y.data().end()}, 2, 3, 2);
  auto xy = matmul(x, y);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(xy.data()[i] - ref[i]) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(TD::zeros({2, 3}), TD::zeros({4, 5}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  auto s = softmax_lastdim(TD::from_data({3}, {0, 0, 0}));
  for (double v : s.data()) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);

  auto big = softmax_lastdim(TD::from_data({2}, {1000, 0}));
  CHECK(std::abs(big.data()[0] - 1.0) < 1e-12);
  CHECK(std::abs(big.data()[1]) < 1e-12);

  auto r = softmax_lastdim(TD::from_data({3}, {1, 2, 3}));
  const long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(r.data()[i] - static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z)) <
          1e-15);
  }
}

TEST_CASE("softmax rows sum to one in 32-bit") {
  std::mt19937_64 rng(2);
  auto x = random_tensor<float>({64, 37}, rng, 5.0);
  auto s = softmax_lastdim(x);
  for (std::size_t r = 0; r < 64; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 37; ++c) total += s.data()[r * 37 + c];
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax of a fully masked row is rejected") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(softmax_lastdim(TD::from_data({2, 2}, {0, 1, -inf, -inf})),
                       doctest::Contains("fully masked row"), NumericError);
}

TEST_CASE("layer_norm examples") {
  auto one = TD::full({2}, 1.0);
  auto zero = TD::zeros({2});
  auto c = layer_norm(TD::from_data({1, 2}, {4, 4}), one, zero, 1e-6);
  for (double v : c.data()) CHECK(v == 0.0);

  // [1,3]: mean 2, variance 1 -> (x-2)/sqrt(1+eps).
  auto h = layer_norm(TD::from_data({1, 2}, {1, 3}), one, zero, 1e-6);
  CHECK(std::abs(h.data()[0] + 1.0 / std::sqrt(1.0 + 1e-6)) < 1e-15);
  CHECK(std::abs(h.data()[1] - 1.0 / std::sqrt(1.0 + 1e-6)) < 1e-15);

  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({50, 16}, rng, 3.0);
  auto g = random_tensor<double>({16}, rng);
  auto b = random_tensor<double>({16}, rng);
  auto y = layer_norm(x, TD::full({16}, 1.0), b, 1e-6);
  double bmean = 0;
  for (double v : b.data()) bmean += v / 16;
  for (std::size_t r = 0; r < 50; ++r) {
    double m = 0;
    for (std::size_t k = 0; k < 16; ++k) m += y.data()[r * 16 + k] / 16;
    CHECK(std::abs(m - bmean) < 1e-12);
  }
  (void)g;
}

TEST_CASE("sigmoid examples") {
  auto s = sigmoid(TD::from_data({3}, {0.0, 40.0, 1.0}));
  CHECK(s.data()[0] == 0.5);
  CHECK(std::abs(s.data()[1] - 1.0) < 1e-12);
  CHECK(std::abs(s.data()[2] - static_cast<double>(1.0L / (1.0L + std::exp(-1.0L)))) < 1e-15);

  std::mt19937_64 rng(4);
  auto x = random_tensor<float>({1000}, rng, 10.0);
  const auto sx = sigmoid(x);
  for (float v : sx.data()) CHECK((v >= 0.0F && v <= 1.0F));
  const auto sd = sigmoid(random_tensor<double>({1000}, rng, 5.0));
  for (double v : sd.data()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("cross_entropy_masked examples") {
  const std::vector<std::int32_t> targets{0, 3, 1, 4};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  auto uniform = cross_entropy_masked(TD::zeros({4, 5}), targets, mask);
  CHECK(std::abs(uniform.item() - std::log(5.0)) < 1e-14);

  auto confident = TD::zeros({1, 4});
  confident.data()[2] = 100.0;
  const std::int32_t t2[] = {2};
  const std::uint8_t m1[] = {1};
  CHECK(cross_entropy_masked(confident, t2, m1).item() < 1e-40);

  auto l = cross_entropy_masked(TD::from_data({1, 3}, {1, 2, 3}), t2, m1);
  const long double lse = std::log(std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L));
  CHECK(std::abs(l.item() - static_cast<double>(lse - 3.0L)) < 1e-15);

  const std::uint8_t none[] = {0};
  CHECK_THROWS_WITH_AS(cross_entropy_masked(TD::zeros({1, 3}), t2, none),
                       doctest::Contains("no text targets"), NumericError);
}

TEST_CASE("cross_entropy_masked ignores masked-out rows entirely") {
  std::mt19937_64 rng(5);
  auto logits = random_tensor<double>({6, 7}, rng, 1.0, true);
  std::vector<std::int32_t> targets{1, 2, 3, 4, 5, 6};
  const std::vector<std::uint8_t> mask{1, 0, 1, 0, 0, 1};
  backward(cross_entropy_masked(logits, targets, mask));
  const std::vector<double> g(logits.grad().begin(), logits.grad().end());
  const double before = cross_entropy_masked(logits, targets, mask).item();
  // Out-of-range ids at masked-out rows are never read.
  targets[1] = -7;
  targets[3] = 999;
  logits.zero_grad();
  const auto l2 = cross_entropy_masked(logits, targets, mask);
  backward(l2);
  CHECK(l2.item() == before);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(logits.grad()[i] == g[i]);
  for (std::size_t r : {1, 3, 4}) {
    for (std::size_t c = 0; c < 7; ++c) CHECK(logits.grad()[r * 7 + c] == 0.0);
  }
}

TEST_CASE("backward examples and accumulation") {
  std::mt19937_64 rng(6);
  auto x = random_tensor<double>({3, 2}, rng, 1.0, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
  x.zero_grad();
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == 2.0 * x.data()[i]);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == 4.0 * x.data()[i]);

  CHECK_THROWS_AS(backward(mul(x, x)), std::exception);
  auto detached = TD::scalar(1.0);
  CHECK_THROWS_AS(backward(detached), std::exception);
}

TEST_CASE("no-grad mode builds no tape") {
  auto x = TD::full({2}, 3.0, true);
  NoGradGuard guard;
  auto y = sum(mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(7);
  auto a = random_tensor<double>({3, 4}, rng, 1.0, true);
  auto b = random_tensor<double>({4, 5}, rng, 1.0, true);
  auto w = random_tensor<double>({5, 3}, rng);
  auto bias = random_tensor<double>({4}, rng, 1.0, true);
  auto gam = random_tensor<double>({4}, rng, 1.0, true);
  const std::vector<std::size_t> rows{2, 0, 2};
  const std::vector<double> factors{0.5, -1.5, 2.0};
  const std::vector<std::int32_t> ids{1, 0, 3, 3};
  auto table = random_tensor<double>({5, 4}, rng, 1.0, true);
  const std::vector<std::int32_t> targets{0, 2, 1};
  const std::vector<std::uint8_t> mask{1, 1, 0};

  auto composite = [&] {
    auto h = matmul(a, b);                                   // [3,5]
    auto t = matmul(sigmoid(h), w);                          // [3,3]
    auto u = concat_rows(t, gather_rows(t, rows));           // [6,3]
    auto e = embedding(table, ids);                          // [4,4]
    auto n = layer_norm(mul_rowvec(add_rowvec(e, bias), gam), gam, bias, 1e-5);
    auto s = softmax_lastdim(matmul(n, b));                  // [4,5]
    auto f = scale_rows(silu(gather_rows(s, rows)), std::span<const double>(factors));
    auto ce = cross_entropy_masked(linear(f, w, TD()), targets, mask);
    return add(add(sum(mul(u, u)), scale(sum(f), 0.7)), ce);
  };
  for (auto leaf : {a, b, bias, gam, table}) {
    const auto r = check_gradient(leaf, composite, all_coords(leaf.numel()));
    CHECK(r.max_rel < 1e-6);
  }
}

TEST_CASE("float and double agree on the same graph") {
  std::mt19937_64 rng(8);
  auto a = random_tensor<double>({4, 6}, rng);
  auto b = random_tensor<double>({6, 3}, rng);
  TF af = TF::from_data(a.shape(), {a.data().begin(), a.data().end()});
  TF bf = TF::from_data(b.shape(), {b.data().begin(), b.data().end()});
  auto d = softmax_lastdim(matmul(a, b));
  auto f = softmax_lastdim(matmul(af, bf));
  for (std::size_t i = 0; i < d.numel(); ++i) CHECK(std::abs(d.data()[i] - f.data()[i]) < 1e-5);
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  auto run = [] {
    std::mt19937_64 rng(9);
    auto x = random_tensor<float>({8, 8}, rng, 1.0, true);
    auto y = layer_norm(matmul(x, x), TF::full({8}, 1.0F), TF::zeros({8}), 1e-6F);
    backward(sum(mul(y, y)));
    return std::vector<float>(x.grad().begin(), x.grad().end());
  };
  CHECK(run() == run());
}
