#pragma once

// Command-line layer: config schemas, dataset manifests and the
// subcommands behind the `hoaf` executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "hoaf/scenes.hpp"
#include "hoaf/session.hpp"
#include "hoaf/training.hpp"

namespace hoaf::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3, kIoError = 4 };

// ---- Config schemas -------------------------------------------------------------
// Every parser rejects unknown keys and out-of-range values with a
// ConfigError naming the field; omitted keys take their defaults.

SceneSpec scene_spec_from_json(const Json& j, SceneSpec base = SceneSpec::desk_preset());
Json to_json(const SceneSpec& spec);
SceneSpec scene_preset(const std::string& name);  // "desk", "full", "noiseless"

struct TrainRunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir = "run";
  std::string structure = "diagonal";
  int B = 1;
  TrainConfig train;
  std::uint64_t seed = 0;
  int train_scenes = 0;  // 0 = every scene of the split
  int val_scenes = 0;
};

TrainRunConfig train_config_from_json(const Json& j);
Json to_json(const TrainRunConfig& c);

BaselineParams baseline_params_from_json(const Json& j);
Json to_json(const BaselineParams& p);

// ---- Manifests ------------------------------------------------------------------

struct ManifestScene {
  std::string id;
  std::uint64_t seed = 0;
  std::string split;
};

struct Manifest {
  SceneSpec spec;
  std::uint64_t seed = 0;
  std::vector<ManifestScene> scenes;

  std::vector<const ManifestScene*> split(const std::string& name) const;
};

struct GenDataOptions {
  SceneSpec spec = SceneSpec::desk_preset();
  int count = 240;
  std::vector<double> ratios{200, 20, 20};  // train, val, test
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "data";
  bool write_wav = false;
  int jobs = 1;
};

// Scenes are regenerated from (spec, seed); WAV files are an optional export.
Manifest make_manifest(const GenDataOptions& opt);
Json to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j);
Manifest load_manifest(const std::filesystem::path& path);
std::vector<Scene> load_scenes(const Manifest& m, const std::string& split, int limit = 0,
                               int jobs = 1);

// ---- Algorithms -----------------------------------------------------------------

// A baseline name (nlms, rls, kf) or a checkpoint path.
struct Algorithm {
  std::string name;  // label used in reports
  std::string baseline;
  std::shared_ptr<const MetaParams> params;
  int fft_size = 512;

  static Algorithm resolve(const std::string& spec, int default_fft_size);
  std::unique_ptr<EchoCanceller> make(const BaselineParams& baseline_params,
                                      double sample_rate) const;
  std::string structure_kind() const;
  int group_size() const;
  int hidden() const;
  long long flops_per_frame() const;
};

// ---- Evaluation -----------------------------------------------------------------

inline constexpr const char* kEvalCsvHeader =
    "scene_id,algorithm,structure,B,H,SERLE,SI-SDR,FLOPs/frame,RTF";

struct EvalRow {
  std::string scene_id;
  std::string algorithm;
  std::string structure;
  int B = 0;
  int H = 0;
  double serle = 0.0;
  double si_sdr = 0.0;  // NaN when the scene has no near-end speech
  long long flops = 0;
  double rtf = 0.0;
};

std::string format_eval_row(const EvalRow& r);

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
  int n = 0;
};

// Percentile bootstrap of the mean (95 %); NaN entries are skipped.
Interval bootstrap_mean(const std::vector<double>& values, int resamples, std::uint64_t seed);

std::vector<EvalRow> evaluate(const Algorithm& algo, const std::vector<Scene>& scenes,
                              const std::vector<std::string>& ids,
                              const BaselineParams& baseline_params, int jobs);

// ---- Entry point ----------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hoaf::cli
