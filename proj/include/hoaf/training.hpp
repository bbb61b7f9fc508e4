#pragma once

// Meta-training of the learned update rule by truncated backpropagation
// through time.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hoaf/dsp.hpp"
#include "hoaf/meta_optimizer.hpp"
#include "hoaf/scenes.hpp"

namespace hoaf {

inline constexpr double kMetaLossEps = 1e-9;

// ln(mean((d - y)^2) + eps) over the concatenated window.
double meta_loss(const RealVector& d, const RealVector& y);

// Filter, optimizer state and input history carried between windows.
struct SessionState {
  FilterWeights w;
  GroupState psi;
  TimeFrame u_frame;  // latest K far-end samples

  static SessionState initial(const MetaParams& phi, const OlsConfig& cfg);
};

struct WindowOptions {
  // Replaces the computed gradient channel of frame t with (*override)[t].
  const std::vector<ComplexVector>* gradient_override = nullptr;
  // Receives the gradient channel used at every frame.
  std::vector<ComplexVector>* gradient_record = nullptr;
};

struct WindowResult {
  double loss = 0.0;
  MetaParams grad;  // real-pair gradient of the loss w.r.t. every tensor
  SessionState next;
};

// u and d hold L consecutive hops (L * R samples). The gradient channel of
// the optimizer input is held constant under differentiation.
double window_loss(const MetaParams& phi, const SessionState& state, const RealVector& u,
                   const RealVector& d, const OlsConfig& cfg, const WindowOptions& opt = {});
WindowResult bptt_gradient(const MetaParams& phi, const SessionState& state, const RealVector& u,
                           const RealVector& d, const OlsConfig& cfg,
                           const WindowOptions& opt = {});

// Convenience form: the first hop of the segment primes the input buffer
// from a cold start, the next L hops form the window.
WindowResult bptt_gradient(const MetaParams& phi, const RealVector& u_segment,
                           const RealVector& d_segment, int unroll, const OlsConfig& cfg);

// ---- Adam ----------------------------------------------------------------------

// Moments of complex parameters are kept per real coordinate: the real part
// of m holds the moment of Re(phi), the imaginary part that of Im(phi).
struct AdamState {
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  MetaParams m;
  MetaParams v;

  static AdamState init(const MetaParams& phi);
};

void adam_step(MetaParams& phi, AdamState& state, const MetaParams& grad, double lr);

double global_norm(const MetaParams& grad);
// Rescales grad to norm `ceiling` if it is larger; returns the norm before clipping.
double clip_global_norm(MetaParams& grad, double ceiling);
void accumulate(MetaParams& into, const MetaParams& g, double scale = 1.0);

// ---- Schedule ------------------------------------------------------------------

struct PlateauSchedule {
  double lr = 1e-4;
  double decay = 0.5;
  int plateau_patience = 5;
  int stop_patience = 16;

  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_decay = 0;

  struct Decision {
    bool improved = false;
    bool decayed = false;
    bool stop = false;
  };
  // Higher scores are better.
  Decision observe(double score);
};

// ---- Checkpoints ---------------------------------------------------------------

struct TrainingProgress {
  int epoch = 0;
  AdamState adam;
  PlateauSchedule schedule;
  MetaParams best_params;
};

struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  MetaParams params;
  int fft_size = 512;
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_score = 0.0;
  std::map<std::string, std::string> metadata;
  std::optional<TrainingProgress> progress;  // present in resumable checkpoints

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// FNV-1a over a byte string, as 16 hex digits.
std::string content_hash(const std::string& bytes);

// ---- Training loop -------------------------------------------------------------

struct TrainConfig {
  OlsConfig ols;
  DependencyStructure structure = DependencyStructure::diagonal();
  int hidden = 16;
  int unroll = 20;      // L
  int batch = 8;        // scenes averaged per meta-update
  double lr = 1e-4;
  double lr_decay = 0.5;
  int plateau_patience = 5;
  int stop_patience = 16;
  double clip = 10.0;
  int max_epochs = 100;
  int max_hops = 0;     // hops used from each training scene, 0 = all
  int jobs = 1;

  void validate() const;
};

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_serle = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  bool improved = false;
};

struct TrainHooks {
  std::function<void(const EpochRecord&, const Checkpoint& resumable)> on_epoch;
  // Validation score; defaults to mean SERLE of learned-optimizer sessions.
  std::function<double(const MetaParams&)> validate;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;  // resumable
  std::vector<EpochRecord> history;
};

// Mean SERLE of learned-optimizer sessions over the scenes.
double mean_serle(const MetaParams& phi, const std::vector<Scene>& scenes, const OlsConfig& cfg,
                  int jobs = 1);

TrainResult train(const TrainConfig& config, const Dataset& dataset, std::uint64_t seed,
                  const TrainHooks& hooks = {}, const Checkpoint* resume = nullptr);

}  // namespace hoaf
