#include <doctest.h>

#include <cmath>

#include "msecnn/errors.hpp"
#include "msecnn/nn_ops.hpp"
#include "msecnn/rng.hpp"
#include "support.hpp"

using namespace msecnn;
using testsupport::central_diff;
using testsupport::distinct_tensor;
using testsupport::random_tensor;

namespace {

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  REQUIRE(a.shape == b.shape);
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return worst;
}

Tensor<double> identity_kernel(Index channels) {
  auto w = Tensor<double>::zeros({channels, channels, 3, 3});
  for (Index c = 0; c < channels; ++c) w(c, c, 1, 1) = 1.0;
  return w;
}

}  // namespace

TEST_CASE("conv2d with an identity kernel returns its input") {
  Xoshiro256pp rng(11);
  const auto x = random_tensor<double>({3, 5, 7}, rng);
  const auto w = identity_kernel(3);
  const auto b = Tensor<double>::zeros({3});
  const auto y = conv2d(x, w, b);
  CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv2d on zero input reproduces the bias everywhere") {
  const auto x = Tensor<double>::zeros({2, 4, 4});
  Xoshiro256pp rng(12);
  const auto w = random_tensor<double>({5, 2, 3, 3}, rng);
  Tensor<double> b({5});
  for (Index o = 0; o < 5; ++o) b[o] = 0.25 * static_cast<double>(o) - 0.5;
  const auto y = conv2d(x, w, b);
  for (Index o = 0; o < 5; ++o)
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) CHECK(y(o, i, j) == b[o]);
}

TEST_CASE("conv2d matches the direct loop implementation on 100 random instances") {
  Xoshiro256pp rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const Index c_in = 1 + static_cast<Index>(rng.below(4));
    const Index c_out = 1 + static_cast<Index>(rng.below(4));
    const Index h = 1 + static_cast<Index>(rng.below(8));
    const Index w = 1 + static_cast<Index>(rng.below(8));
    const auto x = random_tensor<double>({c_in, h, w}, rng);
    const auto wt = random_tensor<double>({c_out, c_in, 3, 3}, rng);
    const auto b = random_tensor<double>({c_out}, rng);
    const auto got = conv2d(x, wt, b);
    const auto want = testsupport::naive_conv2d(x, wt, b);
    INFO("trial ", trial, " shape ", c_in, "x", h, "x", w, " -> ", c_out);
    CHECK(max_abs_diff(got, want) <= 1e-6);
  }
}

TEST_CASE("conv2d rejects mismatched shapes") {
  Xoshiro256pp rng(3);
  const auto x = random_tensor<double>({2, 4, 4}, rng);
  const auto w_bad_cin = random_tensor<double>({3, 5, 3, 3}, rng);
  const auto w_bad_k = random_tensor<double>({3, 2, 5, 5}, rng);
  const auto b = Tensor<double>::zeros({3});
  CHECK_THROWS_AS(conv2d(x, w_bad_cin, b), ShapeError);
  CHECK_THROWS_AS(conv2d(x, w_bad_k, b), ShapeError);
  CHECK_THROWS_AS(conv2d(x, random_tensor<double>({3, 2, 3, 3}, rng), Tensor<double>::zeros({4})),
                  ShapeError);
}

TEST_CASE("conv2d gradients agree with central differences over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Xoshiro256pp rng(seed);
    auto x = random_tensor<double>({2, 4, 5}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto b = random_tensor<double>({3}, rng);
    const auto coeff = random_tensor<double>({3, 4, 5}, rng);

    auto loss = [&] {
      const auto y = conv2d(x, w, b);
      double s = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) s += coeff.data[i] * y.data[i];
      return s;
    };
    const auto g = conv2d_grad(x, w, coeff);

    INFO("seed ", seed);
    for (Index f = 0; f < x.numel(); f += 7)
      CHECK(std::abs(g.dx[f] - central_diff(loss, x, f)) < 1e-7);
    for (Index f = 0; f < w.numel(); f += 5)
      CHECK(std::abs(g.dw[f] - central_diff(loss, w, f)) < 1e-7);
    for (Index f = 0; f < b.numel(); ++f)
      CHECK(std::abs(g.db[f] - central_diff(loss, b, f)) < 1e-7);
  }
}

TEST_CASE("maxpool2d takes the window maximum with floor semantics") {
  Tensor<double> x({1, 3, 5});
  for (Index i = 0; i < 15; ++i) x[i] = static_cast<double>(i);
  const auto r = maxpool2d(x, 2, 2);
  REQUIRE(r.y.shape == std::vector<Index>{1, 1, 2});
  CHECK(r.y(0, 0, 0) == 6.0);   // rows 0..1, cols 0..1
  CHECK(r.y(0, 0, 1) == 8.0);   // rows 0..1, cols 2..3
  // row 2 and column 4 fall outside full windows and are dropped
}

TEST_CASE("maxpool2d resolves ties to the first element in row-major order") {
  auto x = Tensor<double>::full({1, 2, 2}, 3.5);
  const auto r = maxpool2d(x, 2, 2);
  CHECK(r.idx.flat_argmax[0] == 0);
  auto dy = Tensor<double>::full({1, 1, 1}, 1.0);
  const auto dx = maxpool2d_grad(r.idx, dy, x.shape);
  CHECK(dx[0] == 1.0);
  CHECK(dx[1] == 0.0);
  CHECK(dx[2] == 0.0);
  CHECK(dx[3] == 0.0);
}

TEST_CASE("maxpool2d rejects windows larger than the input") {
  Xoshiro256pp rng(5);
  const auto x = random_tensor<double>({1, 2, 3}, rng);
  CHECK_THROWS_AS(maxpool2d(x, 3, 1), ShapeError);
  CHECK_THROWS_AS(maxpool2d(x, 1, 4), ShapeError);
  CHECK_THROWS_AS(maxpool2d(x, 0, 1), ArgumentError);
}

TEST_CASE("maxpool2d_grad rejects corrupted argmax indices") {
  Xoshiro256pp rng(6);
  const auto x = random_tensor<double>({1, 4, 4}, rng);
  auto r = maxpool2d(x, 2, 2);
  auto dy = Tensor<double>::full({1, 2, 2}, 1.0);
  r.idx.flat_argmax[0] = 999;
  CHECK_THROWS_AS(maxpool2d_grad(r.idx, dy, x.shape), InternalError);
}

TEST_CASE("maxpool2d gradients agree with central differences over 20 seeds") {
  for (std::uint64_t seed = 31; seed <= 50; ++seed) {
    Xoshiro256pp rng(seed);
    auto x = distinct_tensor<double>({2, 6, 8}, rng);
    const auto coeff = random_tensor<double>({2, 3, 2}, rng);
    auto loss = [&] {
      const auto r = maxpool2d(x, 2, 4);
      double s = 0.0;
      for (size_t i = 0; i < r.y.data.size(); ++i) s += coeff.data[i] * r.y.data[i];
      return s;
    };
    const auto r = maxpool2d(x, 2, 4);
    const auto dx = maxpool2d_grad(r.idx, coeff, x.shape);
    INFO("seed ", seed);
    for (Index f = 0; f < x.numel(); f += 3)
      CHECK(std::abs(dx[f] - central_diff(loss, x, f, 1e-6)) < 1e-6);
  }
}

TEST_CASE("batchnorm2d train output has zero mean and unit variance per channel") {
  Xoshiro256pp rng(21);
  const auto x = random_tensor<double>({3, 2, 4, 5}, rng, -2.0, 5.0);
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  auto stats = BatchNormStats<double>::init(2);
  const auto r = batchnorm2d(x, gamma, beta, stats, BnMode::Train);
  for (Index c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    long long n = 0;
    for (Index s = 0; s < 3; ++s)
      for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 5; ++j) {
          const double v = r.y(s, c, i, j);
          sum += v;
          sq += v * v;
          ++n;
        }
    const double mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // off by eps/(var+eps)
  }
}

TEST_CASE("batchnorm2d scales and shifts by gamma and beta") {
  Xoshiro256pp rng(22);
  const auto x = random_tensor<double>({2, 1, 3, 3}, rng);
  auto gamma = Tensor<double>::full({1}, 2.0);
  auto beta = Tensor<double>::full({1}, -1.0);
  auto g1 = Tensor<double>::full({1}, 1.0);
  auto b0 = Tensor<double>::zeros({1});
  auto stats_a = BatchNormStats<double>::init(1);
  auto stats_b = BatchNormStats<double>::init(1);
  const auto plain = batchnorm2d(x, g1, b0, stats_a, BnMode::Train);
  const auto scaled = batchnorm2d(x, gamma, beta, stats_b, BnMode::Train);
  for (size_t i = 0; i < plain.y.data.size(); ++i)
    CHECK(scaled.y.data[i] == doctest::Approx(2.0 * plain.y.data[i] - 1.0).epsilon(1e-12));
}

TEST_CASE("batchnorm2d running statistics blend with momentum 0.9") {
  auto x = Tensor<double>::zeros({1, 1, 1, 2});
  x[0] = 1.0;
  x[1] = 3.0;  // mean 2, biased variance 1
  auto gamma = Tensor<double>::full({1}, 1.0);
  auto beta = Tensor<double>::zeros({1});
  auto stats = BatchNormStats<double>::init(1);
  auto r = batchnorm2d(x, gamma, beta, stats, BnMode::Train);
  CHECK(r.stats.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0).epsilon(1e-12));
  CHECK(r.stats.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-12));
  CHECK(r.stats.updates == 1);
  auto r2 = batchnorm2d(x, gamma, beta, r.stats, BnMode::Train);
  CHECK(r2.stats.running_mean[0] == doctest::Approx(0.9 * 0.2 + 0.1 * 2.0).epsilon(1e-12));
  CHECK(r2.stats.updates == 2);
}

TEST_CASE("batchnorm2d inference uses running statistics and leaves them alone") {
  auto x = Tensor<double>::zeros({1, 1, 1, 2});
  x[0] = 4.0;
  x[1] = 8.0;
  auto gamma = Tensor<double>::full({1}, 1.0);
  auto beta = Tensor<double>::zeros({1});
  auto stats = BatchNormStats<double>::init(1);
  stats.running_mean[0] = 6.0;
  stats.running_var[0] = 4.0;
  stats.updates = 1;
  const auto r = batchnorm2d(x, gamma, beta, stats, BnMode::Infer);
  CHECK(r.y[0] == doctest::Approx((4.0 - 6.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-10));
  CHECK(r.y[1] == doctest::Approx((8.0 - 6.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-10));
  CHECK(r.stats.running_mean[0] == 6.0);
  CHECK(r.stats.updates == 1);
}

TEST_CASE("batchnorm2d inference before any update is an internal error") {
  auto x = Tensor<double>::zeros({1, 1, 2, 2});
  auto gamma = Tensor<double>::full({1}, 1.0);
  auto beta = Tensor<double>::zeros({1});
  auto stats = BatchNormStats<double>::init(1);
  CHECK_THROWS_AS(batchnorm2d(x, gamma, beta, stats, BnMode::Infer), InternalError);
}

TEST_CASE("batchnorm2d train mode needs at least two values per channel") {
  auto x = Tensor<double>::zeros({1, 3, 1, 1});
  auto gamma = Tensor<double>::full({3}, 1.0);
  auto beta = Tensor<double>::zeros({3});
  auto stats = BatchNormStats<double>::init(3);
  CHECK_THROWS_AS(batchnorm2d(x, gamma, beta, stats, BnMode::Train), ShapeError);
}

TEST_CASE("batchnorm2d gradients agree with central differences over 20 seeds") {
  for (std::uint64_t seed = 61; seed <= 80; ++seed) {
    Xoshiro256pp rng(seed);
    auto x = random_tensor<double>({2, 3, 2, 4}, rng);
    auto gamma = random_tensor<double>({3}, rng, 0.5, 1.5);
    auto beta = random_tensor<double>({3}, rng);
    const auto coeff = random_tensor<double>({2, 3, 2, 4}, rng);
    auto loss = [&] {
      auto stats = BatchNormStats<double>::init(3);
      const auto r = batchnorm2d(x, gamma, beta, stats, BnMode::Train);
      double s = 0.0;
      for (size_t i = 0; i < r.y.data.size(); ++i) s += coeff.data[i] * r.y.data[i];
      return s;
    };
    auto stats = BatchNormStats<double>::init(3);
    const auto r = batchnorm2d(x, gamma, beta, stats, BnMode::Train);
    const auto g = batchnorm2d_grad(r.cache, coeff);
    INFO("seed ", seed);
    for (Index f = 0; f < x.numel(); f += 5)
      CHECK(std::abs(g.dx[f] - central_diff(loss, x, f)) < 1e-7);
    for (Index f = 0; f < 3; ++f) {
      CHECK(std::abs(g.dgamma[f] - central_diff(loss, gamma, f)) < 1e-7);
      CHECK(std::abs(g.dbeta[f] - central_diff(loss, beta, f)) < 1e-7);
    }
  }
}

TEST_CASE("batchnorm2d dbeta equals the upstream gradient sum exactly") {
  Xoshiro256pp rng(91);
  const auto x = random_tensor<double>({2, 2, 3, 3}, rng);
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  auto stats = BatchNormStats<double>::init(2);
  const auto r = batchnorm2d(x, gamma, beta, stats, BnMode::Train);
  const auto dy = random_tensor<double>({2, 2, 3, 3}, rng);
  const auto g = batchnorm2d_grad(r.cache, dy);
  for (Index c = 0; c < 2; ++c) {
    double want = 0.0;
    for (Index s = 0; s < 2; ++s)
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j) want += dy(s, c, i, j);
    CHECK(g.dbeta[c] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("relu and sigmoid activations and their gradients") {
  Tensor<double> x({4});
  x[0] = -2.0;
  x[1] = -0.0;
  x[2] = 0.5;
  x[3] = 3.0;
  const auto r = activation(x, Activation::Relu);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 0.5);
  CHECK(r[3] == 3.0);
  const auto s = activation(x, Activation::Sigmoid);
  CHECK(s[2] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-12));

  auto dy = Tensor<double>::full({4}, 1.0);
  const auto dr = activation_grad(x, dy, Activation::Relu);
  CHECK(dr[0] == 0.0);
  CHECK(dr[2] == 1.0);
  const auto ds = activation_grad(x, dy, Activation::Sigmoid);
  for (Index i = 0; i < 4; ++i) {
    const double sv = 1.0 / (1.0 + std::exp(-x[i]));
    CHECK(ds[i] == doctest::Approx(sv * (1.0 - sv)).epsilon(1e-12));
  }
}

TEST_CASE("activation_from_string accepts the two names and rejects others") {
  CHECK(activation_from_string("relu") == Activation::Relu);
  CHECK(activation_from_string("sigmoid") == Activation::Sigmoid);
  CHECK_THROWS_AS(activation_from_string("tanh"), ArgumentError);
}

TEST_CASE("dense computes w x + b and its gradients check out") {
  Tensor<double> x({2});
  x[0] = 1.0;
  x[1] = 2.0;
  Tensor<double> w({3, 2});
  for (Index i = 0; i < 6; ++i) w[i] = static_cast<double>(i + 1);
  Tensor<double> b({3});
  b[0] = 0.5;
  b[1] = -0.5;
  b[2] = 0.0;
  const auto y = dense(x, w, b);
  CHECK(y[0] == doctest::Approx(1.0 * 1 + 2.0 * 2 + 0.5));
  CHECK(y[1] == doctest::Approx(1.0 * 3 + 2.0 * 4 - 0.5));
  CHECK(y[2] == doctest::Approx(1.0 * 5 + 2.0 * 6));

  Xoshiro256pp rng(17);
  auto xr = random_tensor<double>({4}, rng);
  auto wr = random_tensor<double>({3, 4}, rng);
  auto br = random_tensor<double>({3}, rng);
  const auto coeff = random_tensor<double>({3}, rng);
  auto loss = [&] {
    const auto out = dense(xr, wr, br);
    double s = 0.0;
    for (Index i = 0; i < 3; ++i) s += coeff[i] * out[i];
    return s;
  };
  const auto g = dense_grad(xr, wr, coeff);
  for (Index f = 0; f < 4; ++f) CHECK(std::abs(g.dx[f] - central_diff(loss, xr, f)) < 1e-8);
  for (Index f = 0; f < 12; ++f) CHECK(std::abs(g.dw[f] - central_diff(loss, wr, f)) < 1e-8);
  for (Index f = 0; f < 3; ++f) CHECK(std::abs(g.db[f] - central_diff(loss, br, f)) < 1e-8);
}

TEST_CASE("concat_channels stacks blocks and concat_grad splits them back bit-exactly") {
  Xoshiro256pp rng(41);
  const auto a = random_tensor<double>({2, 3, 4}, rng);
  const auto b = random_tensor<double>({5, 3, 4}, rng);
  std::vector<Tensor<double>> parts;
  parts.push_back(a);
  parts.push_back(b);
  const auto y = concat_channels(parts);
  REQUIRE(y.shape == std::vector<Index>{7, 3, 4});
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j) {
      for (Index c = 0; c < 2; ++c) CHECK(y(c, i, j) == a(c, i, j));
      for (Index c = 0; c < 5; ++c) CHECK(y(2 + c, i, j) == b(c, i, j));
    }
  const auto split = concat_grad(y, {2, 5});
  REQUIRE(split.size() == 2);
  CHECK(max_abs_diff(split[0], a) == 0.0);
  CHECK(max_abs_diff(split[1], b) == 0.0);
}

TEST_CASE("concat_channels rejects spatial mismatches and bad split sizes") {
  Xoshiro256pp rng(43);
  const auto a = random_tensor<double>({1, 2, 2}, rng);
  const auto b = random_tensor<double>({1, 3, 2}, rng);
  std::vector<Tensor<double>> parts{a, b};
  CHECK_THROWS_AS(concat_channels(parts), ShapeError);
  CHECK_THROWS_AS(concat_grad(a, {2}), ShapeError);
}
