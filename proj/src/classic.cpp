#include "hoaf/classic.hpp"

#include <cmath>

#include "hoaf/errors.hpp"

namespace hoaf {
namespace {

void check_inputs(const SpectrumFrame& a, const SpectrumFrame& b, const FilterWeights& w,
                  const OlsConfig& cfg) {
  if (a.size() != cfg.fft_size || b.size() != cfg.fft_size || w.w.size() != cfg.fft_size)
    throw InvalidArgument("update rule inputs must all have length K");
  require_finite(a, "input spectrum");
  require_finite(b, "error spectrum");
  require_finite(w.w, "filter");
}

UpdateResult finish(const FilterWeights& w, const ComplexVector& raw, const OlsConfig& cfg) {
  UpdateResult out;
  out.delta = project_filter(raw, cfg);
  out.w.w = w.w + out.delta;
  return out;
}

}  // namespace

RlsState RlsState::init(const OlsConfig& cfg, double lambda_f, double eps) {
  RlsState s;
  s.lambda_f = lambda_f;
  s.eps = eps;
  s.P = RealVector::Constant(cfg.fft_size, 1.0 / eps);
  return s;
}

KfState KfState::init(const OlsConfig& cfg, double P0, double A, double psi_w,
                      double smoothing) {
  KfState s;
  s.P = RealVector::Constant(cfg.fft_size, P0);
  s.psi_s = RealVector::Zero(cfg.fft_size);
  s.A = A;
  s.psi_w = psi_w;
  s.smoothing = smoothing;
  return s;
}

UpdateResult nlms_step(const NlmsState& state, const SpectrumFrame& u_freq,
                       const SpectrumFrame& e_freq, const FilterWeights& w, const OlsConfig& cfg) {
  check_inputs(u_freq, e_freq, w, cfg);
  if (!(state.mu > 0.0) || !(state.eps > 0.0))
    throw InvalidArgument("nlms: mu and eps must be positive");
  const RealVector power = u_freq.cwiseAbs2();
  ComplexVector raw(cfg.fft_size);
  for (int k = 0; k < cfg.fft_size; ++k)
    raw[k] = state.mu * std::conj(u_freq[k]) * e_freq[k] / (power[k] + state.eps);
  return finish(w, raw, cfg);
}

UpdateResult rls_step(RlsState& state, const SpectrumFrame& u_freq, const SpectrumFrame& e_freq,
                      const FilterWeights& w, const OlsConfig& cfg) {
  check_inputs(u_freq, e_freq, w, cfg);
  if (state.P.size() != cfg.fft_size) throw InvalidArgument("rls: P has wrong length");
  if (!(state.lambda_f > 0.0 && state.lambda_f <= 1.0))
    throw InvalidArgument("rls: forgetting factor must lie in (0, 1]");
  ComplexVector raw(cfg.fft_size);
  for (int k = 0; k < cfg.fft_size; ++k) {
    const double p = state.P[k];
    const double power = std::norm(u_freq[k]);
    const double denom = state.lambda_f + p * power;
    raw[k] = p * std::conj(u_freq[k]) * e_freq[k] / denom;
    state.P[k] = p / denom;
  }
  return finish(w, raw, cfg);
}

KfResult kf_step(KfState& state, const SpectrumFrame& u_freq, const SpectrumFrame& d_freq,
                 const FilterWeights& w, const OlsConfig& cfg) {
  check_inputs(u_freq, d_freq, w, cfg);
  if (state.P.size() != cfg.fft_size || state.psi_s.size() != cfg.fft_size)
    throw InvalidArgument("kf: state has wrong length");
  const int K = cfg.fft_size;
  const double share = static_cast<double>(cfg.hop_size) / K;

  // Predict.
  FilterWeights prior{state.A * w.w};
  // Process noise scales with the filter power so that a path change of
  // any scale keeps the state uncertainty alive.
  const double q = state.psi_w * w.w.squaredNorm() / K;
  const RealVector P_prior = state.A * state.A * state.P.array() + q +
                             (1.0 - state.A * state.A) * w.w.cwiseAbs2().array();

  // Filter with the predicted weights. d_freq embeds the desired hop, so the
  // desired time samples are recovered from its inverse transform.
  const OlsOutput y = ols_apply_freq(cfg, prior, u_freq);
  const TimeFrame d_time = idft(d_freq).tail(cfg.hop_size).real();
  const ErrorFrame err = af_error(d_time, y.y_time, cfg);

  ComplexVector raw(K);
  for (int k = 0; k < K; ++k) {
    const double power = std::norm(u_freq[k]);
    const double psi_s = std::max(state.psi_s[k], state.psi_s_floor);
    const double denom = P_prior[k] * power + psi_s;
    const double gain = denom > 0.0 ? P_prior[k] / denom : 0.0;
    raw[k] = gain * std::conj(u_freq[k]) * err.e_freq[k];
    state.P[k] = std::max(0.0, (1.0 - share * gain * power) * P_prior[k]);
  }

  KfResult out;
  const ComplexVector correction = project_filter(raw, cfg);
  out.w.w = prior.w + correction;

  // Observation noise from the a posteriori error, i.e. with the updated
  // weights. The a priori error would keep the estimate inflated by the
  // remaining misalignment and stall convergence.
  const ErrorFrame post = af_error(d_time, ols_apply_freq(cfg, out.w, u_freq).y_time, cfg);
  state.psi_s = state.smoothing * state.psi_s.array() +
                (1.0 - state.smoothing) * post.e_freq.cwiseAbs2().array();
  out.delta = out.w.w - w.w;
  out.e_freq = err.e_freq;
  out.e_time = err.e_time;
  out.y_time = y.y_time;
  return out;
}

}  // namespace hoaf
