#pragma once

#include <complex>
#include <span>
#include <vector>

namespace pulse::fft {

using cplx = std::complex<double>;

/// Unnormalized forward DFT: X_k = sum_t x_t exp(-2 pi i k t / N).
std::vector<cplx> forward(std::span<const double> x);
std::vector<cplx> forward(std::span<const cplx> x);

/// Inverse DFT including the 1/N factor.
std::vector<cplx> inverse(std::span<const cplx> spectrum);

}  // namespace pulse::fft
