#pragma once

// Hand-derived frequency-domain update rules. Each one is a per-bin
// (diagonal) recursion followed by the overlap-save gradient constraint,
// and each returns its additive update explicitly so that w' = w + delta.

#include "hoaf/dsp.hpp"

namespace hoaf {

struct NlmsState {
  double mu = 0.5;
  double eps = 1e-6;
};

struct RlsState {
  double lambda_f = 0.8;
  RealVector P;  // per-bin inverse correlation
  double eps = 1e-2;

  static RlsState init(const OlsConfig& cfg, double lambda_f = 0.8, double eps = 1e-2);
};

struct KfState {
  RealVector P;           // per-bin state error variance
  double psi_w = 1e-3;    // process noise relative to the mean per-bin filter power
                          // (1 - A^2) |W_k|^2 is added per bin on top
  RealVector psi_s;       // per-bin observation noise estimate
  double A = 1.0;
  double smoothing = 0.5;
  double psi_s_floor = 1e-10;

  static KfState init(const OlsConfig& cfg, double P0 = 1e3, double A = 1.0,
                      double psi_w = 1e-3, double smoothing = 0.5);
};

struct UpdateResult {
  FilterWeights w;
  ComplexVector delta;  // w - w_prev
};

UpdateResult nlms_step(const NlmsState& state, const SpectrumFrame& u_freq,
                       const SpectrumFrame& e_freq, const FilterWeights& w, const OlsConfig& cfg);

// Updates state.P in place.
UpdateResult rls_step(RlsState& state, const SpectrumFrame& u_freq, const SpectrumFrame& e_freq,
                      const FilterWeights& w, const OlsConfig& cfg);

struct KfResult {
  FilterWeights w;
  ComplexVector delta;
  SpectrumFrame e_freq;  // prior error, computed with the predicted filter
  TimeFrame e_time;
  TimeFrame y_time;
};

// Predict / filter / correct. d_freq is the padded transform of the desired hop.
KfResult kf_step(KfState& state, const SpectrumFrame& u_freq, const SpectrumFrame& d_freq,
                 const FilterWeights& w, const OlsConfig& cfg);

}  // namespace hoaf
