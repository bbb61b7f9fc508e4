#include "hoaf/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fft.hpp"
#include "hoaf/errors.hpp"

namespace hoaf {

OlsConfig OlsConfig::with_fft_size(int fft_size, double sample_rate) {
  OlsConfig cfg{fft_size, fft_size / 2, sample_rate};
  cfg.validate();
  return cfg;
}

void OlsConfig::validate() const {
  if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
    throw InvalidArgument("fft size must be a power of two >= 4, got " +
                          std::to_string(fft_size));
  if (hop_size * 2 != fft_size)
    throw InvalidArgument("hop size must be half the fft size");
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be positive");
}

FilterWeights FilterWeights::zeros(int fft_size) {
  return FilterWeights{ComplexVector::Zero(fft_size)};
}

ComplexVector dft(const ComplexVector& x) {
  ComplexVector out(x.size());
  if (x.size() > 0) detail::fft_forward(x.data(), out.data(), static_cast<int>(x.size()));
  return out;
}

ComplexVector dft(const RealVector& x) { return dft(ComplexVector(x.cast<Complex>())); }

ComplexVector idft(const ComplexVector& x) {
  ComplexVector out(x.size());
  if (x.size() == 0) return out;
  detail::fft_backward(x.data(), out.data(), static_cast<int>(x.size()));
  out /= static_cast<double>(x.size());
  return out;
}

namespace {

void check_size(Eigen::Index got, int want, const char* what) {
  if (got != want)
    throw InvalidArgument(std::string(what) + ": expected length " + std::to_string(want) +
                          ", got " + std::to_string(got));
}

}  // namespace

void require_finite(const ComplexVector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

void require_finite(const RealVector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

ComplexVector project_filter(const ComplexVector& w, const OlsConfig& cfg) {
  check_size(w.size(), cfg.fft_size, "filter");
  ComplexVector taps = idft(w);
  taps.tail(cfg.hop_size).setZero();
  return dft(taps);
}

SpectrumFrame pad_and_transform(const TimeFrame& hop, const OlsConfig& cfg) {
  check_size(hop.size(), cfg.hop_size, "hop");
  ComplexVector frame = ComplexVector::Zero(cfg.fft_size);
  frame.tail(cfg.hop_size) = hop.cast<Complex>();
  return dft(frame);
}

OlsOutput ols_apply_freq(const OlsConfig& cfg, const FilterWeights& w,
                         const SpectrumFrame& u_freq) {
  check_size(w.w.size(), cfg.fft_size, "filter");
  check_size(u_freq.size(), cfg.fft_size, "input spectrum");
  require_finite(w.w, "filter");
  require_finite(u_freq, "input spectrum");

  OlsOutput out;
  out.y_freq = u_freq.cwiseProduct(project_filter(w.w, cfg));
  const ComplexVector y_full = idft(out.y_freq);
  const auto tail = y_full.tail(cfg.hop_size);
  out.y_time = tail.real();
  out.imag_residual = tail.imag().cwiseAbs().maxCoeff();
  return out;
}

OlsOutput ols_apply(const OlsConfig& cfg, const FilterWeights& w, const TimeFrame& u_time) {
  check_size(u_time.size(), cfg.fft_size, "input frame");
  require_finite(u_time, "input frame");
  return ols_apply_freq(cfg, w, dft(u_time));
}

ErrorFrame af_error(const TimeFrame& d_time, const TimeFrame& y_time, const OlsConfig& cfg) {
  if (d_time.size() != y_time.size())
    throw InvalidArgument("af_error: desired and output hops differ in length");
  ErrorFrame out;
  out.e_time = d_time - y_time;
  out.e_freq = pad_and_transform(out.e_time, cfg);
  return out;
}

ComplexVector filter_gradient(const SpectrumFrame& u_freq, const TimeFrame& e_time,
                              const OlsConfig& cfg) {
  check_size(u_freq.size(), cfg.fft_size, "input spectrum");
  require_finite(u_freq, "input spectrum");
  require_finite(e_time, "error");
  const SpectrumFrame e_freq = pad_and_transform(e_time, cfg);
  const ComplexVector raw = u_freq.conjugate().cwiseProduct(e_freq);
  return project_filter(raw, cfg) * (-1.0 / cfg.fft_size);
}

ComplexVector ols_adjoint(const SpectrumFrame& u_freq, const TimeFrame& y_time_bar,
                          const SpectrumFrame& y_freq_bar, const OlsConfig& cfg) {
  // y_time = Re(T idft(Y)) contributes (1/K) dft([0; y_time_bar]) to Y_bar.
  ComplexVector total = y_freq_bar + pad_and_transform(y_time_bar, cfg) / cfg.fft_size;
  // Y = u * Z_w w, and Z_w is Hermitian.
  return project_filter(u_freq.conjugate().cwiseProduct(total), cfg);
}

TimeFrame pad_and_transform_adjoint(const SpectrumFrame& e_freq_bar, const OlsConfig& cfg) {
  check_size(e_freq_bar.size(), cfg.fft_size, "error spectrum adjoint");
  // dft^H = K idft.
  const ComplexVector back = idft(e_freq_bar) * static_cast<double>(cfg.fft_size);
  return back.tail(cfg.hop_size).real();
}

RealVector filter_taps(const FilterWeights& w, const OlsConfig& cfg) {
  check_size(w.w.size(), cfg.fft_size, "filter");
  return idft(w.w).head(cfg.filter_taps()).real();
}

FilterWeights weights_from_taps(const RealVector& taps, const OlsConfig& cfg) {
  if (taps.size() > cfg.filter_taps())
    throw InvalidArgument("filter has more taps than the overlap-save frame can hold");
  RealVector padded = RealVector::Zero(cfg.fft_size);
  padded.head(taps.size()) = taps;
  return FilterWeights{dft(padded)};
}

double misalignment_db(const FilterWeights& w, const RealVector& true_taps,
                       const OlsConfig& cfg) {
  RealVector reference = RealVector::Zero(cfg.filter_taps());
  const auto n = std::min<Eigen::Index>(true_taps.size(), reference.size());
  reference.head(n) = true_taps.head(n);
  double tail_energy = 0.0;
  if (true_taps.size() > n) tail_energy = true_taps.tail(true_taps.size() - n).squaredNorm();
  const double num = (filter_taps(w, cfg) - reference).squaredNorm() + tail_energy;
  const double den = true_taps.squaredNorm();
  if (den <= 0.0) throw InvalidArgument("misalignment: reference filter is zero");
  return 10.0 * std::log10(std::max(num / den, 1e-300));
}

OlsInputBuffer::OlsInputBuffer(const OlsConfig& cfg)
    : hop_(cfg.hop_size), buffer_(TimeFrame::Zero(cfg.fft_size)) {}

const TimeFrame& OlsInputBuffer::push(std::span<const double> hop) {
  if (static_cast<int>(hop.size()) != hop_)
    throw InvalidArgument("input hop has wrong length");
  buffer_.head(hop_) = buffer_.tail(hop_).eval();
  for (int i = 0; i < hop_; ++i) buffer_[hop_ + i] = hop[i];
  return buffer_;
}

void OlsInputBuffer::reset() { buffer_.setZero(); }

}  // namespace hoaf
