#include <doctest.h>

#include <complex>
#include <vector>

#include "msecnn/errors.hpp"
#include "msecnn/fft.hpp"
#include "msecnn/rng.hpp"
#include "support.hpp"

using msecnn::fft_radix2;
using msecnn::Xoshiro256pp;

TEST_CASE("fft of a unit impulse is flat") {
  std::vector<std::complex<double>> x(8, {0.0, 0.0});
  x[0] = {1.0, 0.0};
  fft_radix2(x);
  for (const auto& v : x) {
    CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.imag() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("fft of a constant concentrates in bin zero") {
  std::vector<std::complex<double>> x(16, {1.0, 0.0});
  fft_radix2(x);
  CHECK(x[0].real() == doctest::Approx(16.0).epsilon(1e-12));
  for (size_t k = 1; k < x.size(); ++k) CHECK(std::abs(x[k]) < 1e-12);
}

TEST_CASE("fft matches the direct transform for every power of two up to 512") {
  Xoshiro256pp rng(42);
  for (size_t n = 4; n <= 512; n *= 2) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const auto want = testsupport::naive_dft(x);
    auto got = x;
    fft_radix2(got);
    double worst = 0.0;
    for (size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
    INFO("length ", n);
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("fft rejects lengths that are not powers of two") {
  std::vector<std::complex<double>> x(6, {1.0, 0.0});
  CHECK_THROWS_AS(fft_radix2(x), msecnn::ArgumentError);
  std::vector<std::complex<double>> empty;
  CHECK_THROWS_AS(fft_radix2(empty), msecnn::ArgumentError);
}

TEST_CASE("fft is linear") {
  Xoshiro256pp rng(7);
  std::vector<std::complex<double>> a(32), b(32), sum(32);
  for (size_t i = 0; i < 32; ++i) {
    a[i] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    b[i] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    sum[i] = a[i] + 2.0 * b[i];
  }
  fft_radix2(a);
  fft_radix2(b);
  fft_radix2(sum);
  for (size_t i = 0; i < 32; ++i) CHECK(std::abs(sum[i] - (a[i] + 2.0 * b[i])) < 1e-12);
}
