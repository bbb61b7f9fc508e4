#pragma once

#include <complex>

namespace hoaf::detail {

// Unnormalized in-place-capable complex transforms backed by cached FFTW
// plans. `in` and `out` may alias. Safe to call from multiple threads.
void fft_forward(const std::complex<double>* in, std::complex<double>* out, int n);
void fft_backward(const std::complex<double>* in, std::complex<double>* out, int n);

}  // namespace hoaf::detail
