#include "msecnn/fft.hpp"

#include <cmath>
#include <numbers>

#include "msecnn/errors.hpp"

namespace msecnn {

void fft_radix2(std::vector<std::complex<double>>& signal) {
  const size_t n = signal.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ArgumentError("fft_radix2 length must be a power of two, got " +
                        std::to_string(n));
  if (n == 1) return;

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(signal[i], signal[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wstep(std::cos(angle), std::sin(angle));
    for (size_t start = 0; start < n; start += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> even = signal[start + k];
        const std::complex<double> odd = signal[start + k + len / 2] * w;
        signal[start + k] = even + odd;
        signal[start + k + len / 2] = even - odd;
        w *= wstep;
      }
    }
  }
}

std::vector<std::complex<double>> fft_radix2(const std::vector<std::complex<double>>& signal) {
  std::vector<std::complex<double>> out = signal;
  fft_radix2(out);
  return out;
}

}  // namespace msecnn
