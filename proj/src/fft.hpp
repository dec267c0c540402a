#pragma once

#include <complex>
#include <span>
#include <vector>

namespace eisbayes {

// Thin FFTW wrappers, any length, thread-safe (plan creation is
// serialized internally). Forward is unscaled; inverse divides by N.
std::vector<std::complex<double>> fft_forward(std::span<const std::complex<double>> in);
std::vector<std::complex<double>> fft_inverse(std::span<const std::complex<double>> in);

}  // namespace eisbayes
