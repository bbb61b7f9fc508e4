#include "hoaf/meta_optimizer.hpp"

#include "hoaf/errors.hpp"

namespace hoaf {

OptimizerInput build_input(const ComplexVector& grad, const SpectrumFrame& u_freq,
                           const SpectrumFrame& d_freq, const SpectrumFrame& e_freq,
                           const SpectrumFrame& y_freq) {
  const auto K = grad.size();
  if (u_freq.size() != K || d_freq.size() != K || e_freq.size() != K || y_freq.size() != K)
    throw InvalidArgument("build_input: all channels must have length K");
  OptimizerInput xi;
  xi.raw.resize(K, kFeatureChannels);
  xi.raw.col(kGradChannel) = grad;
  xi.raw.col(kFarChannel) = u_freq;
  xi.raw.col(kDesiredChannel) = d_freq;
  xi.raw.col(kErrorChannel) = e_freq;
  xi.raw.col(kOutputChannel) = y_freq;
  xi.features = log_scale(xi.raw);
  return xi;
}

GroupState GroupState::zeros(const MetaParams& phi, int fft_size) {
  phi.structure().validate(fft_size);
  const int C = phi.structure().groups(fft_size);
  GroupState s;
  for (auto& h : s.h) h = ComplexMatrix::Zero(phi.hidden(), C);
  return s;
}

OptimizerStep optimizer_step(const MetaParams& phi, const OptimizerInput& xi,
                             const GroupState& psi, OptimizerCache* cache) {
  const int K = xi.fft_size();
  const auto& s = phi.structure();
  s.validate(K);
  const int C = s.groups(K);
  if (psi.groups() != C || psi.h[1].cols() != C)
    throw InvalidArgument("optimizer_step: state has " + std::to_string(psi.groups()) +
                          " groups, structure needs " + std::to_string(C));

  OptimizerCache local;
  OptimizerCache& c = cache ? *cache : local;
  c.patches = group_patches(s, xi.features);
  c.x0 = phi.sampler.down.forward(c.patches);

  OptimizerStep out;
  out.state.h[0] = gru_step(phi.gru[0], c.x0, psi.h[0], &c.gru[0]);
  out.state.h[1] = gru_step(phi.gru[1], out.state.h[0], psi.h[1], &c.gru[1]);
  c.h_out = out.state.h[1];
  out.delta = upsample(phi.sampler, c.h_out, K);
  return out;
}

OptimizerStepBar optimizer_step_backward(const MetaParams& phi, const OptimizerCache& c,
                                         const ComplexVector& delta_bar,
                                         const GroupState& next_state_bar, int fft_size,
                                         MetaParams& grad) {
  const auto& s = phi.structure();
  const int C = static_cast<int>(c.h_out.cols());

  const ComplexMatrix local_bar = scatter_adjoint(s, delta_bar, C);
  ComplexMatrix h1_bar = phi.sampler.up.backward(c.h_out, local_bar, grad.sampler.up);
  h1_bar += next_state_bar.h[1];

  OptimizerStepBar out;
  auto [h0_from_top, h1_prev_bar] = gru_backward(phi.gru[1], c.gru[1], h1_bar, grad.gru[1]);
  ComplexMatrix h0_bar = h0_from_top + next_state_bar.h[0];
  auto [x0_bar, h0_prev_bar] = gru_backward(phi.gru[0], c.gru[0], h0_bar, grad.gru[0]);
  out.state_bar.h[0] = std::move(h0_prev_bar);
  out.state_bar.h[1] = std::move(h1_prev_bar);

  const ComplexMatrix patches_bar = phi.sampler.down.backward(c.patches, x0_bar, grad.sampler.down);
  out.features_bar = group_patches_adjoint(s, patches_bar, fft_size);
  return out;
}

FilterWeights apply_update(const FilterWeights& w, const ComplexVector& delta) {
  if (w.w.size() != delta.size()) throw InvalidArgument("apply_update: length mismatch");
  require_finite(delta, "filter update");
  return FilterWeights{w.w + delta};
}

}  // namespace hoaf
