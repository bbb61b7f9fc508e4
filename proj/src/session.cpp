#include "hoaf/session.hpp"

#include <cmath>
#include <iomanip>

#include "hoaf/errors.hpp"

namespace hoaf {

EchoCanceller::EchoCanceller(const OlsConfig& cfg)
    : cfg_(cfg), input_((cfg.validate(), cfg)), w_(FilterWeights::zeros(cfg.fft_size)) {}

NlmsCanceller::NlmsCanceller(const OlsConfig& cfg, NlmsState state)
    : EchoCanceller(cfg), state_(state) {}

HopOutput NlmsCanceller::process(const TimeFrame& u_hop, const TimeFrame& d_hop) {
  const SpectrumFrame U = dft(input_.push({u_hop.data(), static_cast<size_t>(u_hop.size())}));
  HopOutput out;
  out.y = ols_apply_freq(cfg_, w_, U).y_time;
  const ErrorFrame err = af_error(d_hop, out.y, cfg_);
  out.e = err.e_time;
  UpdateResult up = nlms_step(state_, U, err.e_freq, w_, cfg_);
  w_ = std::move(up.w);
  out.delta = std::move(up.delta);
  return out;
}

RlsCanceller::RlsCanceller(const OlsConfig& cfg, RlsState state)
    : EchoCanceller(cfg), state_(std::move(state)) {}

HopOutput RlsCanceller::process(const TimeFrame& u_hop, const TimeFrame& d_hop) {
  const SpectrumFrame U = dft(input_.push({u_hop.data(), static_cast<size_t>(u_hop.size())}));
  HopOutput out;
  out.y = ols_apply_freq(cfg_, w_, U).y_time;
  const ErrorFrame err = af_error(d_hop, out.y, cfg_);
  out.e = err.e_time;
  UpdateResult up = rls_step(state_, U, err.e_freq, w_, cfg_);
  w_ = std::move(up.w);
  out.delta = std::move(up.delta);
  return out;
}

KfCanceller::KfCanceller(const OlsConfig& cfg, KfState state)
    : EchoCanceller(cfg), state_(std::move(state)) {}

HopOutput KfCanceller::process(const TimeFrame& u_hop, const TimeFrame& d_hop) {
  const SpectrumFrame U = dft(input_.push({u_hop.data(), static_cast<size_t>(u_hop.size())}));
  KfResult r = kf_step(state_, U, pad_and_transform(d_hop, cfg_), w_, cfg_);
  w_ = std::move(r.w);
  return HopOutput{std::move(r.y_time), std::move(r.e_time), std::move(r.delta)};
}

MetaCanceller::MetaCanceller(const OlsConfig& cfg, std::shared_ptr<const MetaParams> phi)
    : EchoCanceller(cfg), phi_(std::move(phi)) {
  if (!phi_) throw InvalidArgument("meta canceller needs parameters");
  psi_ = GroupState::zeros(*phi_, cfg.fft_size);
}

std::string MetaCanceller::name() const { return "meta-" + phi_->structure().label(); }

HopOutput MetaCanceller::process(const TimeFrame& u_hop, const TimeFrame& d_hop) {
  const SpectrumFrame U = dft(input_.push({u_hop.data(), static_cast<size_t>(u_hop.size())}));
  const OlsOutput y = ols_apply_freq(cfg_, w_, U);
  const ErrorFrame err = af_error(d_hop, y.y_time, cfg_);
  const ComplexVector grad = filter_gradient(U, err.e_time, cfg_);
  const OptimizerInput xi =
      build_input(grad, U, pad_and_transform(d_hop, cfg_), err.e_freq, y.y_freq);
  OptimizerStep step = optimizer_step(*phi_, xi, psi_);
  w_ = apply_update(w_, step.delta);
  psi_ = std::move(step.state);
  return HopOutput{y.y_time, err.e_time, std::move(step.delta)};
}

long long MetaCanceller::flops_per_frame() const {
  return hoaf::flops_per_frame({phi_->structure(), cfg_.fft_size, phi_->hidden()}).total();
}

std::unique_ptr<EchoCanceller> make_baseline(const std::string& name, const OlsConfig& cfg,
                                             const BaselineParams& p) {
  if (name == "nlms") return std::make_unique<NlmsCanceller>(cfg, p.nlms);
  if (name == "rls")
    return std::make_unique<RlsCanceller>(cfg, RlsState::init(cfg, p.rls_lambda, p.rls_eps));
  if (name == "kf")
    return std::make_unique<KfCanceller>(
        cfg, KfState::init(cfg, p.kf_P0, p.kf_A, p.kf_psi_w, p.kf_smoothing));
  throw InvalidArgument("unknown baseline '" + name + "' (expected nlms, rls or kf)");
}

void write_telemetry(std::ostream& out, const FrameTelemetry& t) {
  out << std::setprecision(10) << "{\"frame\":" << t.frame << ",\"erle_db\":" << t.erle_db
      << ",\"update_norm\":" << t.update_norm << ",\"filter_norm\":" << t.filter_norm
      << ",\"flops\":" << t.flops << "}\n";
}

SessionResult run_session(EchoCanceller& canceller, const RealVector& u, const RealVector& d,
                          const TelemetrySink& sink) {
  if (u.size() != d.size()) throw InvalidArgument("far-end and microphone lengths differ");
  const int R = canceller.config().hop_size;
  const Eigen::Index n = u.size();
  const long frames = static_cast<long>((n + R - 1) / R);
  SessionResult out;
  out.e = RealVector::Zero(frames * R);
  out.y = RealVector::Zero(frames * R);
  TimeFrame u_hop(R), d_hop(R);
  const long long flops = canceller.flops_per_frame();
  for (long f = 0; f < frames; ++f) {
    const Eigen::Index start = f * R;
    const Eigen::Index len = std::min<Eigen::Index>(R, n - start);
    u_hop.setZero();
    d_hop.setZero();
    u_hop.head(len) = u.segment(start, len);
    d_hop.head(len) = d.segment(start, len);
    HopOutput hop;
    try {
      hop = canceller.process(u_hop, d_hop);
    } catch (const NumericError& e) {
      throw NumericError(e.what(), f);
    }
    out.e.segment(start, R) = hop.e;
    out.y.segment(start, R) = hop.y;
    if (sink) {
      FrameTelemetry t;
      t.frame = f;
      const double dp = d_hop.squaredNorm(), ep = hop.e.squaredNorm();
      t.erle_db = dp > 0.0 && ep > 0.0 ? 10.0 * std::log10(dp / ep) : 0.0;
      t.update_norm = hop.delta.norm();
      t.filter_norm = canceller.weights().w.norm();
      t.flops = flops;
      sink(t, canceller.weights());
    }
  }
  out.e.conservativeResize(n);
  out.y.conservativeResize(n);
  out.frames = frames;
  return out;
}

SessionResult run_aec_session(std::shared_ptr<const MetaParams> phi,
                              const DependencyStructure& structure, const Scene& scene,
                              const OlsConfig& cfg, const TelemetrySink& sink) {
  if (!phi || !(phi->structure() == structure))
    throw InvalidArgument("session structure does not match the parameters");
  if (std::abs(scene.sample_rate - cfg.sample_rate) > 0.5)
    throw InvalidArgument("scene sample rate differs from the filter config");
  structure.validate(cfg.fft_size);
  MetaCanceller canceller(cfg, std::move(phi));
  return run_session(canceller, scene.u, scene.d, sink);
}

}  // namespace hoaf
