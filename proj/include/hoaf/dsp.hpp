#pragma once

// Overlap-save frequency-domain filtering.
//
// Conventions used throughout the library:
//  * dft() is the unnormalized K-point DFT, idft() carries the 1/K factor.
//  * A filter is held as its full K-bin spectrum w. Only the first K-R
//    time-domain taps are live; project_filter() zeroes the rest.
//  * Hops of R samples are embedded into K-sample frames by left zero
//    padding before transforming (pad_and_transform()).
//  * Complex gradients are conjugate Wirtinger gradients dL/d(conj w). The
//    real-pair gradient dL/dRe + i dL/dIm is twice that.

#include <complex>
#include <span>

#include <Eigen/Core>

namespace hoaf {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using SpectrumFrame = ComplexVector;
using TimeFrame = RealVector;

struct OlsConfig {
  int fft_size = 512;   // K
  int hop_size = 256;   // R = K / 2
  double sample_rate = 16000.0;

  static OlsConfig with_fft_size(int fft_size, double sample_rate = 16000.0);

  // Throws InvalidArgument unless K is a power of two >= 4 and R = K / 2.
  void validate() const;
  int filter_taps() const { return fft_size - hop_size; }
};

struct FilterWeights {
  ComplexVector w;

  static FilterWeights zeros(int fft_size);
  int size() const { return static_cast<int>(w.size()); }
};

ComplexVector dft(const ComplexVector& x);
ComplexVector dft(const RealVector& x);
ComplexVector idft(const ComplexVector& x);

// Z_w w: keep the first K-R time-domain taps of w.
ComplexVector project_filter(const ComplexVector& w, const OlsConfig& cfg);

// dft([0_R; hop]).
SpectrumFrame pad_and_transform(const TimeFrame& hop, const OlsConfig& cfg);

struct OlsOutput {
  TimeFrame y_time;      // R samples
  SpectrumFrame y_freq;  // diag(u) Z_w w
  // max |imag| of the trimmed inverse transform before the real part is taken.
  double imag_residual = 0.0;
};

// u_time holds the latest K input samples (previous hop followed by current).
OlsOutput ols_apply(const OlsConfig& cfg, const FilterWeights& w, const TimeFrame& u_time);
OlsOutput ols_apply_freq(const OlsConfig& cfg, const FilterWeights& w, const SpectrumFrame& u_freq);

struct ErrorFrame {
  TimeFrame e_time;
  SpectrumFrame e_freq;
};

ErrorFrame af_error(const TimeFrame& d_time, const TimeFrame& y_time, const OlsConfig& cfg);

// Conjugate gradient of ||e_time||^2 w.r.t. w:
// -Z_w^H diag(u)^H Z_y^H e = -(1/K) Z_w (conj(u) * dft([0; e])).
ComplexVector filter_gradient(const SpectrumFrame& u_freq, const TimeFrame& e_time,
                              const OlsConfig& cfg);

// Adjoints of the filtering path, used by meta-gradients. All take and
// return real-pair gradients.
//   y_time_bar, y_freq_bar -> w_bar   for (y_time, y_freq) = ols_apply(w)
ComplexVector ols_adjoint(const SpectrumFrame& u_freq, const TimeFrame& y_time_bar,
                          const SpectrumFrame& y_freq_bar, const OlsConfig& cfg);
//   e_freq_bar -> e_time_bar          for e_freq = pad_and_transform(e_time)
TimeFrame pad_and_transform_adjoint(const SpectrumFrame& e_freq_bar, const OlsConfig& cfg);

// First K-R taps of Re(idft(w)).
RealVector filter_taps(const FilterWeights& w, const OlsConfig& cfg);
// Spectrum of a tap vector (at most K-R taps, zero padded to K).
FilterWeights weights_from_taps(const RealVector& taps, const OlsConfig& cfg);

// 10 log10(||taps(w) - w_true||^2 / ||w_true||^2).
double misalignment_db(const FilterWeights& w, const RealVector& true_taps, const OlsConfig& cfg);

// Sliding K-sample input buffer fed one hop at a time.
class OlsInputBuffer {
 public:
  explicit OlsInputBuffer(const OlsConfig& cfg);
  const TimeFrame& push(std::span<const double> hop);
  const TimeFrame& frame() const { return buffer_; }
  void reset();

 private:
  int hop_;
  TimeFrame buffer_;
};

void require_finite(const ComplexVector& v, const char* what);
void require_finite(const RealVector& v, const char* what);

}  // namespace hoaf
