#pragma once

#include <complex>
#include <vector>

namespace msecnn {

/// Unnormalized forward DFT of a power-of-two length signal, in place.
/// Iterative radix-2 decimation in time.
void fft_radix2(std::vector<std::complex<double>>& signal);

/// Convenience copy form.
std::vector<std::complex<double>> fft_radix2(const std::vector<std::complex<double>>& signal);

}  // namespace msecnn
