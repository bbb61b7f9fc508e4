#pragma once

// Streaming echo-cancellation sessions. A session feeds far-end and
// microphone hops through an update rule and collects the error signal.

#include <functional>
#include <memory>
#include <ostream>
#include <string>

#include "hoaf/classic.hpp"
#include "hoaf/meta_optimizer.hpp"
#include "hoaf/scenes.hpp"

namespace hoaf {

struct HopOutput {
  TimeFrame y;
  TimeFrame e;
  ComplexVector delta;
};

class EchoCanceller {
 public:
  explicit EchoCanceller(const OlsConfig& cfg);
  virtual ~EchoCanceller() = default;

  virtual std::string name() const = 0;
  virtual HopOutput process(const TimeFrame& u_hop, const TimeFrame& d_hop) = 0;
  // Learned-optimizer multiply-accumulates per frame; 0 for classical rules.
  virtual long long flops_per_frame() const { return 0; }

  const FilterWeights& weights() const { return w_; }
  const OlsConfig& config() const { return cfg_; }

 protected:
  OlsConfig cfg_;
  OlsInputBuffer input_;
  FilterWeights w_;
};

class NlmsCanceller : public EchoCanceller {
 public:
  NlmsCanceller(const OlsConfig& cfg, NlmsState state);
  std::string name() const override { return "nlms"; }
  HopOutput process(const TimeFrame& u_hop, const TimeFrame& d_hop) override;

 private:
  NlmsState state_;
};

class RlsCanceller : public EchoCanceller {
 public:
  RlsCanceller(const OlsConfig& cfg, RlsState state);
  std::string name() const override { return "rls"; }
  HopOutput process(const TimeFrame& u_hop, const TimeFrame& d_hop) override;

 private:
  RlsState state_;
};

class KfCanceller : public EchoCanceller {
 public:
  KfCanceller(const OlsConfig& cfg, KfState state);
  std::string name() const override { return "kf"; }
  HopOutput process(const TimeFrame& u_hop, const TimeFrame& d_hop) override;

 private:
  KfState state_;
};

class MetaCanceller : public EchoCanceller {
 public:
  MetaCanceller(const OlsConfig& cfg, std::shared_ptr<const MetaParams> phi);
  std::string name() const override;
  HopOutput process(const TimeFrame& u_hop, const TimeFrame& d_hop) override;
  long long flops_per_frame() const override;
  const GroupState& state() const { return psi_; }

 private:
  std::shared_ptr<const MetaParams> phi_;
  GroupState psi_;
};

// Hyper-parameters of the classical rules, selectable by name.
struct BaselineParams {
  NlmsState nlms;
  double rls_lambda = 0.8;
  double rls_eps = 1e-2;
  double kf_A = 1.0;
  double kf_psi_w = 1e-3;
  double kf_P0 = 1e3;
  double kf_smoothing = 0.5;
};

// name is one of "nlms", "rls", "kf".
std::unique_ptr<EchoCanceller> make_baseline(const std::string& name, const OlsConfig& cfg,
                                             const BaselineParams& params = {});

struct FrameTelemetry {
  long frame = 0;
  double erle_db = 0.0;  // 10 log10(|d|^2 / |e|^2) for this hop
  double update_norm = 0.0;
  double filter_norm = 0.0;
  long long flops = 0;
};

using TelemetrySink = std::function<void(const FrameTelemetry&, const FilterWeights&)>;

void write_telemetry(std::ostream& out, const FrameTelemetry& t);

struct SessionResult {
  RealVector e;
  RealVector y;
  long frames = 0;
};

// Processes whole hops; a trailing partial hop is zero padded and trimmed.
SessionResult run_session(EchoCanceller& canceller, const RealVector& u, const RealVector& d,
                          const TelemetrySink& sink = {});

SessionResult run_aec_session(std::shared_ptr<const MetaParams> phi,
                              const DependencyStructure& structure, const Scene& scene,
                              const OlsConfig& cfg, const TelemetrySink& sink = {});

}  // namespace hoaf
