#pragma once

// The learned update rule: per-bin inputs are grouped by the sampler, each
// group runs a two-layer complex GRU with its own state, and the group
// outputs are scattered back onto the K filter bins as an additive update.

#include "hoaf/dsp.hpp"
#include "hoaf/neural.hpp"

namespace hoaf {

enum Channel : int { kGradChannel = 0, kFarChannel, kDesiredChannel, kErrorChannel, kOutputChannel };

struct OptimizerInput {
  ComplexMatrix raw;       // K x 5, columns ordered as Channel
  ComplexMatrix features;  // log_scale(raw)

  int fft_size() const { return static_cast<int>(raw.rows()); }
};

OptimizerInput build_input(const ComplexVector& grad, const SpectrumFrame& u_freq,
                           const SpectrumFrame& d_freq, const SpectrumFrame& e_freq,
                           const SpectrumFrame& y_freq);

// Hidden state of both GRU layers, H x C each.
struct GroupState {
  ComplexMatrix h[2];

  static GroupState zeros(const MetaParams& phi, int fft_size);
  int groups() const { return static_cast<int>(h[0].cols()); }
};

struct OptimizerCache {
  ComplexMatrix patches;  // 5B x C
  ComplexMatrix x0;       // down-sampled group features, H x C
  GruCache gru[2];
  ComplexMatrix h_out;    // top GRU output, H x C
};

struct OptimizerStep {
  ComplexVector delta;  // K
  GroupState state;
};

OptimizerStep optimizer_step(const MetaParams& phi, const OptimizerInput& xi,
                             const GroupState& psi, OptimizerCache* cache = nullptr);

struct OptimizerStepBar {
  ComplexMatrix features_bar;  // K x 5, adjoint w.r.t. the log-scaled features
  GroupState state_bar;        // adjoint w.r.t. the incoming state
};

// Reverse pass of one optimizer_step. delta_bar and next_state_bar are the
// adjoints of the outputs; parameter gradients accumulate into grad.
OptimizerStepBar optimizer_step_backward(const MetaParams& phi, const OptimizerCache& cache,
                                         const ComplexVector& delta_bar,
                                         const GroupState& next_state_bar, int fft_size,
                                         MetaParams& grad);

FilterWeights apply_update(const FilterWeights& w, const ComplexVector& delta);

}  // namespace hoaf
