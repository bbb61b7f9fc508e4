#include "hoaf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "hoaf/errors.hpp"
#include "hoaf/wav.hpp"
#include "parallel.hpp"

namespace hoaf::cli {
namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Reads an object while tracking which keys were consumed.
class Reader {
 public:
  Reader(const Json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_, "expected a JSON object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return fallback;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(key, "expected true or false");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw ConfigError(key, "expected a number");
        if constexpr (std::is_integral_v<T>) {
          const double v = it->template get<double>();
          if (v != std::floor(v)) throw ConfigError(key, "expected an integer");
          if constexpr (std::is_unsigned_v<T>) {
            if (v < 0) throw ConfigError(key, "expected a non-negative integer");
          }
        }
      } else {
        if (!it->is_string()) throw ConfigError(key, "expected a string");
      }
      return it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(it.key(), "unknown field in " + context_);
  }

 private:
  const Json& j_;
  std::string context_;
  std::set<std::string> used_;
};

Json read_json_file(const fs::path& path, bool is_config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    if (is_config) throw ConfigError(path.string(), std::string("malformed JSON: ") + e.what());
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::vector<int> split_counts(int count, const std::vector<double>& ratios) {
  const double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  std::vector<int> n(ratios.size());
  std::vector<std::pair<double, size_t>> frac;
  int assigned = 0;
  for (size_t i = 0; i < ratios.size(); ++i) {
    const double exact = count * ratios[i] / sum;
    n[i] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += n[i];
    frac.push_back({exact - n[i], i});
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; assigned < count; ++k, ++assigned) ++n[frac[k % frac.size()].second];
  return n;
}

}  // namespace

// ---- Config schemas -------------------------------------------------------------

SceneSpec scene_preset(const std::string& name) {
  if (name == "desk") return SceneSpec::desk_preset();
  if (name == "full") return SceneSpec::full_preset();
  if (name == "noiseless") return SceneSpec::noiseless_preset();
  throw ConfigError("preset", "unknown scene preset '" + name + "' (desk, full, noiseless)");
}

SceneSpec scene_spec_from_json(const Json& j, SceneSpec s) {
  Reader r(j, "scene spec");
  if (r.has("preset")) s = scene_preset(r.get<std::string>("preset", ""));
  s.sample_rate = r.get("sample_rate", s.sample_rate);
  s.duration_s = r.get("duration_s", s.duration_s);
  s.rir_length = r.get("rir_length", s.rir_length);
  s.rt60_s = r.get("rt60_s", s.rt60_s);
  s.farend_level_db_min = r.get("farend_level_db_min", s.farend_level_db_min);
  s.farend_level_db_max = r.get("farend_level_db_max", s.farend_level_db_max);
  s.double_talk = r.get("double_talk", s.double_talk);
  s.near_fraction = r.get("near_fraction", s.near_fraction);
  s.ser_db_min = r.get("ser_db_min", s.ser_db_min);
  s.ser_db_max = r.get("ser_db_max", s.ser_db_max);
  s.noise = r.get("noise", s.noise);
  s.snr_db_min = r.get("snr_db_min", s.snr_db_min);
  s.snr_db_max = r.get("snr_db_max", s.snr_db_max);
  s.nonlinear_prob = r.get("nonlinear_prob", s.nonlinear_prob);
  s.circular_shift = r.get("circular_shift", s.circular_shift);
  s.farend_wav = r.get("farend_wav", s.farend_wav);
  r.finish();
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("scene", e.what());
  }
  return s;
}

Json to_json(const SceneSpec& s) {
  Json j;
  j["sample_rate"] = s.sample_rate;
  j["duration_s"] = s.duration_s;
  j["rir_length"] = s.rir_length;
  j["rt60_s"] = s.rt60_s;
  j["farend_level_db_min"] = s.farend_level_db_min;
  j["farend_level_db_max"] = s.farend_level_db_max;
  j["double_talk"] = s.double_talk;
  j["near_fraction"] = s.near_fraction;
  j["ser_db_min"] = s.ser_db_min;
  j["ser_db_max"] = s.ser_db_max;
  j["noise"] = s.noise;
  j["snr_db_min"] = s.snr_db_min;
  j["snr_db_max"] = s.snr_db_max;
  j["nonlinear_prob"] = s.nonlinear_prob;
  j["circular_shift"] = s.circular_shift;
  j["farend_wav"] = s.farend_wav;
  return j;
}

TrainRunConfig train_config_from_json(const Json& j) {
  TrainRunConfig c;
  Reader r(j, "train config");
  c.manifest = r.get<std::string>("manifest", "");
  c.out_dir = r.get<std::string>("out_dir", c.out_dir.string());
  c.structure = r.get("structure", c.structure);
  c.B = r.get("B", c.B);
  const int K = r.get("K", 512);
  if (K < 4 || (K & (K - 1)) != 0) throw ConfigError("K", "must be a power of two >= 4");
  if (r.has("R") && r.get("R", 0) != K / 2) throw ConfigError("R", "must equal K/2");
  c.train.ols = OlsConfig::with_fft_size(K);
  c.train.ols.sample_rate = r.get("sample_rate", c.train.ols.sample_rate);
  c.train.hidden = r.get("H", c.train.hidden);
  c.train.unroll = r.get("L", c.train.unroll);
  c.train.batch = r.get("batch", c.train.batch);
  c.train.lr = r.get("lr", c.train.lr);
  c.train.lr_decay = r.get("lr_decay", c.train.lr_decay);
  c.train.plateau_patience = r.get("plateau_patience", c.train.plateau_patience);
  c.train.stop_patience = r.get("stop_patience", c.train.stop_patience);
  c.train.clip = r.get("clip", c.train.clip);
  c.train.max_epochs = r.get("max_epochs", c.train.max_epochs);
  c.train.max_hops = r.get("max_hops", c.train.max_hops);
  c.train.jobs = r.get("jobs", c.train.jobs);
  c.seed = r.get("seed", c.seed);
  c.train_scenes = r.get("train_scenes", c.train_scenes);
  c.val_scenes = r.get("val_scenes", c.val_scenes);
  r.finish();

  if (c.structure != "diagonal" && c.structure != "block" && c.structure != "banded")
    throw ConfigError("structure", "must be diagonal, block or banded");
  if (c.structure == "diagonal") c.B = 1;
  try {
    c.train.structure = DependencyStructure::parse(c.structure, c.B);
  } catch (const InvalidArgument& e) {
    throw ConfigError("B", e.what());
  }
  try {
    c.train.structure.validate(K);
  } catch (const InvalidArgument& e) {
    throw ConfigError("B", e.what());
  }
  if (c.train_scenes < 0) throw ConfigError("train_scenes", "must be >= 0");
  if (c.val_scenes < 0) throw ConfigError("val_scenes", "must be >= 0");
  c.train.validate();
  return c;
}

Json to_json(const TrainRunConfig& c) {
  Json j;
  j["manifest"] = c.manifest.string();
  j["out_dir"] = c.out_dir.string();
  j["structure"] = c.structure;
  j["B"] = c.B;
  j["H"] = c.train.hidden;
  j["K"] = c.train.ols.fft_size;
  j["R"] = c.train.ols.hop_size;
  j["sample_rate"] = c.train.ols.sample_rate;
  j["L"] = c.train.unroll;
  j["batch"] = c.train.batch;
  j["lr"] = c.train.lr;
  j["lr_decay"] = c.train.lr_decay;
  j["plateau_patience"] = c.train.plateau_patience;
  j["stop_patience"] = c.train.stop_patience;
  j["clip"] = c.train.clip;
  j["max_epochs"] = c.train.max_epochs;
  j["max_hops"] = c.train.max_hops;
  j["jobs"] = c.train.jobs;
  j["seed"] = c.seed;
  j["train_scenes"] = c.train_scenes;
  j["val_scenes"] = c.val_scenes;
  return j;
}

BaselineParams baseline_params_from_json(const Json& j) {
  BaselineParams p;
  Reader r(j, "baseline config");
  if (r.has("nlms")) {
    Reader n(r.raw("nlms"), "nlms");
    p.nlms.mu = n.get("mu", p.nlms.mu);
    p.nlms.eps = n.get("eps", p.nlms.eps);
    n.finish();
  }
  if (r.has("rls")) {
    Reader n(r.raw("rls"), "rls");
    p.rls_lambda = n.get("lambda", p.rls_lambda);
    p.rls_eps = n.get("eps", p.rls_eps);
    n.finish();
  }
  if (r.has("kf")) {
    Reader n(r.raw("kf"), "kf");
    p.kf_A = n.get("A", p.kf_A);
    p.kf_psi_w = n.get("psi_w", p.kf_psi_w);
    p.kf_P0 = n.get("P0", p.kf_P0);
    p.kf_smoothing = n.get("smoothing", p.kf_smoothing);
    n.finish();
  }
  r.finish();
  if (!(p.nlms.mu > 0.0 && p.nlms.mu <= 2.0)) throw ConfigError("nlms.mu", "must lie in (0, 2]");
  if (!(p.nlms.eps > 0.0)) throw ConfigError("nlms.eps", "must be positive");
  if (!(p.rls_lambda > 0.0 && p.rls_lambda <= 1.0))
    throw ConfigError("rls.lambda", "must lie in (0, 1]");
  if (!(p.rls_eps > 0.0)) throw ConfigError("rls.eps", "must be positive");
  if (!(p.kf_A > 0.0 && p.kf_A <= 1.0)) throw ConfigError("kf.A", "must lie in (0, 1]");
  if (!(p.kf_psi_w >= 0.0)) throw ConfigError("kf.psi_w", "must be >= 0");
  if (!(p.kf_P0 >= 0.0)) throw ConfigError("kf.P0", "must be >= 0");
  if (!(p.kf_smoothing >= 0.0 && p.kf_smoothing < 1.0))
    throw ConfigError("kf.smoothing", "must lie in [0, 1)");
  return p;
}

Json to_json(const BaselineParams& p) {
  Json j;
  j["nlms"] = {{"mu", p.nlms.mu}, {"eps", p.nlms.eps}};
  j["rls"] = {{"lambda", p.rls_lambda}, {"eps", p.rls_eps}};
  j["kf"] = {{"A", p.kf_A}, {"psi_w", p.kf_psi_w}, {"P0", p.kf_P0}, {"smoothing", p.kf_smoothing}};
  return j;
}

// ---- Manifests ------------------------------------------------------------------

std::vector<const ManifestScene*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestScene*> out;
  for (const auto& s : scenes)
    if (s.split == name) out.push_back(&s);
  return out;
}

Manifest make_manifest(const GenDataOptions& opt) {
  if (opt.count < 1) throw ConfigError("count", "must be >= 1");
  if (opt.ratios.size() != 3) throw ConfigError("ratio", "expects three values train,val,test");
  for (double r : opt.ratios)
    if (!(r >= 0.0)) throw ConfigError("ratio", "values must be >= 0");
  if (!(opt.ratios[0] + opt.ratios[1] + opt.ratios[2] > 0.0))
    throw ConfigError("ratio", "values must not all be zero");
  opt.spec.validate();

  Manifest m;
  m.spec = opt.spec;
  m.seed = opt.seed;
  const std::vector<int> n = split_counts(opt.count, opt.ratios);
  const char* names[] = {"train", "val", "test"};
  int index = 0;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < n[s]; ++i, ++index) {
      std::ostringstream id;
      id << "scene_" << std::setw(5) << std::setfill('0') << index;
      m.scenes.push_back({id.str(), splitmix(opt.seed * 0x100000001b3ULL + index), names[s]});
    }
  return m;
}

Json to_json(const Manifest& m) {
  Json j;
  j["format"] = "hoaf-manifest";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["spec"] = to_json(m.spec);
  Json scenes = Json::array();
  for (const auto& s : m.scenes) scenes.push_back({{"id", s.id}, {"seed", s.seed}, {"split", s.split}});
  j["scenes"] = scenes;
  return j;
}

Manifest manifest_from_json(const Json& j) {
  try {
    if (j.at("format") != "hoaf-manifest" || j.at("version") != 1)
      throw IoError("not a version-1 hoaf manifest");
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.spec = scene_spec_from_json(j.at("spec"), SceneSpec{});
    for (const auto& s : j.at("scenes"))
      m.scenes.push_back({s.at("id").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                          s.at("split").get<std::string>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
}

Manifest load_manifest(const fs::path& path) {
  return manifest_from_json(read_json_file(path, false));
}

std::vector<Scene> load_scenes(const Manifest& m, const std::string& split, int limit, int jobs) {
  auto entries = m.split(split);
  if (limit > 0 && static_cast<int>(entries.size()) > limit) entries.resize(limit);
  std::vector<Scene> scenes(entries.size());
  detail::parallel_for(static_cast<int>(entries.size()), jobs,
                       [&](int i) { scenes[i] = gen_scene(m.spec, entries[i]->seed); });
  return scenes;
}

// ---- Algorithms -----------------------------------------------------------------

Algorithm Algorithm::resolve(const std::string& spec, int default_fft_size) {
  Algorithm a;
  if (spec == "nlms" || spec == "rls" || spec == "kf") {
    a.name = spec;
    a.baseline = spec;
    a.fft_size = default_fft_size;
    return a;
  }
  if (!fs::exists(spec))
    throw IoError("'" + spec + "' is neither a baseline (nlms, rls, kf) nor a checkpoint file");
  const Checkpoint c = Checkpoint::load(spec);
  a.params = std::make_shared<const MetaParams>(c.params);
  a.fft_size = c.fft_size;
  a.name = "meta-" + c.params.structure().label() + "-H" + std::to_string(c.params.hidden());
  return a;
}

std::unique_ptr<EchoCanceller> Algorithm::make(const BaselineParams& bp, double sample_rate) const {
  OlsConfig cfg = OlsConfig::with_fft_size(fft_size);
  cfg.sample_rate = sample_rate;
  if (params) return std::make_unique<MetaCanceller>(cfg, params);
  return make_baseline(baseline, cfg, bp);
}

std::string Algorithm::structure_kind() const {
  return params ? params->structure().kind_name() : "none";
}
int Algorithm::group_size() const { return params ? params->structure().window() : 0; }
int Algorithm::hidden() const { return params ? params->hidden() : 0; }
long long Algorithm::flops_per_frame() const {
  return params ? hoaf::flops_per_frame({params->structure(), fft_size, params->hidden()}).total()
                : 0;
}

// ---- Evaluation -----------------------------------------------------------------

std::string format_eval_row(const EvalRow& r) {
  std::ostringstream s;
  s << r.scene_id << ',' << r.algorithm << ',' << r.structure << ',' << r.B << ',' << r.H << ','
    << fmt(r.serle) << ',' << fmt(r.si_sdr) << ',' << r.flops << ',' << fmt(r.rtf);
  return s.str();
}

Interval bootstrap_mean(const std::vector<double>& values, int resamples, std::uint64_t seed) {
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  Interval out;
  out.n = static_cast<int>(v.size());
  if (v.empty()) {
    out.mean = out.low = out.high = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  if (resamples < 1 || v.size() == 1) {
    out.low = out.high = out.mean;
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, v.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double sum = 0.0;
    for (size_t i = 0; i < v.size(); ++i) sum += v[pick(rng)];
    m = sum / v.size();
  }
  std::sort(means.begin(), means.end());
  auto at = [&](double q) {
    const size_t idx = static_cast<size_t>(std::clamp(q * (resamples - 1), 0.0, resamples - 1.0));
    return means[idx];
  };
  out.low = at(0.025);
  out.high = at(0.975);
  return out;
}

std::vector<EvalRow> evaluate(const Algorithm& algo, const std::vector<Scene>& scenes,
                              const std::vector<std::string>& ids, const BaselineParams& bp,
                              int jobs) {
  std::vector<EvalRow> rows(scenes.size());
  detail::parallel_for(static_cast<int>(scenes.size()), jobs, [&](int i) {
    const Scene& sc = scenes[i];
    auto aec = algo.make(bp, sc.sample_rate);
    const auto t0 = std::chrono::steady_clock::now();
    const SessionResult res = run_session(*aec, sc.u, sc.d);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EvalRow& r = rows[i];
    r.scene_id = ids[i];
    r.algorithm = algo.name;
    r.structure = algo.structure_kind();
    r.B = algo.group_size();
    r.H = algo.hidden();
    r.serle = serle(sc.echo, res.y, aec->config().hop_size);
    r.si_sdr = sc.s.squaredNorm() > 0.0 ? si_sdr(sc.s, res.e)
                                        : std::numeric_limits<double>::quiet_NaN();
    r.flops = algo.flops_per_frame();
    r.rtf = secs / sc.duration_s();
  });
  return rows;
}

// ---- Commands -------------------------------------------------------------------

namespace {

struct CommonEval {
  std::vector<std::string> algorithms;
  std::string manifest;
  std::string split = "test";
  int limit = 0;
  int K = 512;
  int jobs = 1;
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  std::string baseline_config;
};

BaselineParams load_baselines(const std::string& path) {
  if (path.empty()) return {};
  return baseline_params_from_json(read_json_file(path, true));
}

std::vector<std::string> split_ids(const Manifest& m, const std::string& split, int limit) {
  std::vector<std::string> ids;
  for (const auto* s : m.split(split)) ids.push_back(s->id);
  if (limit > 0 && static_cast<int>(ids.size()) > limit) ids.resize(limit);
  return ids;
}

const char* kSummaryHeader =
    "algorithm,structure,B,H,n,SERLE_mean,SERLE_ci_low,SERLE_ci_high,SI-SDR_mean,SI-SDR_ci_low,"
    "SI-SDR_ci_high,FLOPs/frame,RTF_mean";

std::string summarize(const std::vector<EvalRow>& rows, int resamples, std::uint64_t seed) {
  std::vector<double> serles, sdrs, rtfs;
  for (const auto& r : rows) {
    serles.push_back(r.serle);
    sdrs.push_back(r.si_sdr);
    rtfs.push_back(r.rtf);
  }
  const Interval a = bootstrap_mean(serles, resamples, seed);
  const Interval b = bootstrap_mean(sdrs, resamples, seed + 1);
  const double rtf = std::accumulate(rtfs.begin(), rtfs.end(), 0.0) / std::max<size_t>(1, rtfs.size());
  const EvalRow& f = rows.front();
  std::ostringstream s;
  s << f.algorithm << ',' << f.structure << ',' << f.B << ',' << f.H << ',' << a.n << ','
    << fmt(a.mean) << ',' << fmt(a.low) << ',' << fmt(a.high) << ',' << fmt(b.mean) << ','
    << fmt(b.low) << ',' << fmt(b.high) << ',' << f.flops << ',' << fmt(rtf);
  return s.str();
}

fs::path summary_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_filename(csv.stem().string() + "_summary.csv");
  return p;
}

int cmd_gen_data(GenDataOptions opt, std::ostream& out) {
  const Manifest m = make_manifest(opt);
  fs::create_directories(opt.out_dir);
  write_text(opt.out_dir / "manifest.json", to_json(m).dump(2) + "\n");
  if (opt.write_wav) {
    detail::parallel_for(static_cast<int>(m.scenes.size()), opt.jobs, [&](int i) {
      const auto& e = m.scenes[i];
      const Scene sc = gen_scene(m.spec, e.seed);
      const fs::path dir = opt.out_dir / e.split;
      fs::create_directories(dir);
      const std::pair<const char*, const RealVector*> parts[] = {
          {"farend", &sc.u}, {"mic", &sc.d}, {"near", &sc.s}, {"noise", &sc.n}, {"echo", &sc.echo}};
      Json side;
      side["id"] = e.id;
      side["seed"] = e.seed;
      side["split"] = e.split;
      side["sample_rate"] = sc.sample_rate;
      side["ser_db"] = sc.ser_db;
      side["snr_db"] = sc.snr_db;
      side["shift"] = sc.shift;
      side["nonlinearity"] = {{"kind", sc.nonlinearity.name()}, {"param", sc.nonlinearity.param}};
      side["rir"] = std::vector<double>(sc.rir.begin(), sc.rir.end());
      for (const auto& [name, sig] : parts) {
        const fs::path wav = dir / (e.id + "_" + name + ".wav");
        write_wav(wav, *sig, sc.sample_rate);
        side["files"][name] = wav.filename().string();
      }
      write_text(dir / (e.id + ".json"), side.dump(2) + "\n");
    });
  }
  std::map<std::string, int> counts;
  for (const auto& s : m.scenes) ++counts[s.split];
  out << "wrote " << (opt.out_dir / "manifest.json").string() << ": " << counts["train"]
      << " train, " << counts["val"] << " val, " << counts["test"] << " test\n";
  return kOk;
}

int cmd_train(const std::string& config_path, const std::string& resume_path, std::ostream& out) {
  const TrainRunConfig rc = train_config_from_json(read_json_file(config_path, true));
  if (rc.manifest.empty()) throw ConfigError("manifest", "is required");
  const Manifest m = load_manifest(rc.manifest);
  if (std::abs(m.spec.sample_rate - rc.train.ols.sample_rate) > 0.5)
    throw ConfigError("sample_rate", "differs from the manifest scenes");

  Dataset ds;
  ds.train = load_scenes(m, "train", rc.train_scenes, rc.train.jobs);
  ds.val = load_scenes(m, "val", rc.val_scenes, rc.train.jobs);
  if (ds.train.empty()) throw ConfigError("manifest", "has no train scenes");
  if (ds.val.empty()) throw ConfigError("manifest", "has no val scenes");

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = Checkpoint::load(resume_path);

  fs::create_directories(rc.out_dir);
  write_text(rc.out_dir / "config.json", to_json(rc).dump(2) + "\n");
  const fs::path curve = rc.out_dir / "training_curve.csv";
  const fs::path last = rc.out_dir / "last.ckpt";
  std::ofstream curve_out;
  if (resume) {
    curve_out.open(curve, std::ios::app);
  } else {
    curve_out.open(curve, std::ios::trunc);
    curve_out << "epoch,train_loss,val_serle,lr,grad_norm,improved\n";
  }
  if (!curve_out) throw IoError("cannot write " + curve.string());

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const Checkpoint& c) {
    c.save(last);
    curve_out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_serle) << ','
              << fmt(r.lr) << ',' << fmt(r.grad_norm) << ',' << (r.improved ? 1 : 0) << '\n';
    curve_out.flush();
    out << "epoch " << r.epoch << "  loss " << fmt(r.train_loss) << "  val SERLE "
        << fmt(r.val_serle) << " dB  lr " << fmt(r.lr) << (r.improved ? "  *" : "") << '\n';
    out.flush();
  };
  TrainResult res;
  try {
    res = train(rc.train, ds, rc.seed, hooks, resume ? &*resume : nullptr);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last.string());
  }
  const fs::path best = rc.out_dir / "best.ckpt";
  res.best.save(best);
  out << "best epoch " << res.best.epoch << " val SERLE " << fmt(res.best.val_score)
      << " dB -> " << best.string() << "\n";
  return kOk;
}

int cmd_eval(const CommonEval& opt, const std::string& out_csv, std::ostream& out) {
  if (opt.algorithms.empty()) throw ConfigError("algorithm", "at least one is required");
  const Manifest m = load_manifest(opt.manifest);
  const BaselineParams bp = load_baselines(opt.baseline_config);
  const auto ids = split_ids(m, opt.split, opt.limit);
  if (ids.empty()) throw ConfigError("split", "'" + opt.split + "' has no scenes");
  const std::vector<Scene> scenes = load_scenes(m, opt.split, opt.limit, opt.jobs);

  std::ostringstream csv, summary;
  csv << kEvalCsvHeader << '\n';
  summary << kSummaryHeader << '\n';
  out << std::left << std::setw(26) << "algorithm" << std::setw(28) << "SERLE dB [95% CI]"
      << "SI-SDR dB [95% CI]\n";
  for (const auto& spec : opt.algorithms) {
    const Algorithm algo = Algorithm::resolve(spec, opt.K);
    const auto rows = evaluate(algo, scenes, ids, bp, opt.jobs);
    for (const auto& r : rows) csv << format_eval_row(r) << '\n';
    const std::string line = summarize(rows, opt.bootstrap, opt.seed);
    summary << line << '\n';
    std::vector<double> a, b;
    for (const auto& r : rows) {
      a.push_back(r.serle);
      b.push_back(r.si_sdr);
    }
    const Interval ia = bootstrap_mean(a, opt.bootstrap, opt.seed);
    const Interval ib = bootstrap_mean(b, opt.bootstrap, opt.seed + 1);
    std::ostringstream c1, c2;
    c1 << std::fixed << std::setprecision(2) << ia.mean << " [" << ia.low << ", " << ia.high << "]";
    c2 << std::fixed << std::setprecision(2) << ib.mean << " [" << ib.low << ", " << ib.high << "]";
    out << std::left << std::setw(26) << algo.name << std::setw(28) << c1.str() << c2.str() << '\n';
  }
  write_text(out_csv, csv.str());
  write_text(summary_path(out_csv), summary.str());
  out << "wrote " << out_csv << " and " << summary_path(out_csv).string() << '\n';
  return kOk;
}

int cmd_sweep(const std::string& config_path, bool reuse, std::ostream& out) {
  const Json j = read_json_file(config_path, true);
  Reader r(j, "sweep config");
  if (!r.has("base")) throw ConfigError("base", "is required");
  Json base = r.raw("base");
  std::vector<std::string> structures{"diagonal", "block", "banded"};
  std::vector<int> Bs{4, 8}, Hs{16};
  std::vector<std::string> baselines;
  try {
    if (r.has("structures")) structures = r.raw("structures").get<std::vector<std::string>>();
    if (r.has("B")) Bs = r.raw("B").get<std::vector<int>>();
    if (r.has("H")) Hs = r.raw("H").get<std::vector<int>>();
    if (r.has("baselines")) baselines = r.raw("baselines").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("sweep", e.what());
  }
  const std::string split = r.get<std::string>("eval_split", "test");
  const int limit = r.get("eval_scenes", 0);
  const int bootstrap = r.get("bootstrap", 1000);
  const fs::path out_dir = r.get<std::string>("out_dir", "sweep");
  r.finish();

  // Validate every grid point before any compute.
  struct Point {
    TrainRunConfig cfg;
    fs::path dir;
  };
  std::vector<Point> points;
  for (const auto& s : structures)
    for (int B : (s == "diagonal" ? std::vector<int>{1} : Bs))
      for (int H : Hs) {
        Json pj = base;
        pj["structure"] = s;
        pj["B"] = B;
        pj["H"] = H;
        Point p{train_config_from_json(pj), {}};
        p.dir = out_dir / (p.cfg.train.structure.label() + "-H" + std::to_string(H));
        p.cfg.out_dir = p.dir;
        points.push_back(std::move(p));
      }
  if (points.empty()) throw ConfigError("structures", "empty grid");
  const TrainRunConfig& first = points.front().cfg;
  const Manifest m = load_manifest(first.manifest);
  const auto ids = split_ids(m, split, limit);
  const std::vector<Scene> scenes = load_scenes(m, split, limit, first.train.jobs);
  if (scenes.empty()) throw ConfigError("eval_split", "has no scenes");

  fs::create_directories(out_dir);
  std::ostringstream rows;
  rows << "structure,B,H,n,SERLE_mean,SERLE_ci_low,SERLE_ci_high,SI-SDR_mean,FLOPs/frame,RTF_mean,"
          "checkpoint\n";
  auto emit = [&](const Algorithm& algo, const std::string& ckpt) {
    const auto ev = evaluate(algo, scenes, ids, {}, first.train.jobs);
    std::vector<double> a, b, t;
    for (const auto& e : ev) {
      a.push_back(e.serle);
      b.push_back(e.si_sdr);
      t.push_back(e.rtf);
    }
    const Interval ia = bootstrap_mean(a, bootstrap, first.seed);
    const Interval ib = bootstrap_mean(b, 0, 0);
    rows << algo.structure_kind() << ',' << algo.group_size() << ',' << algo.hidden() << ','
         << ia.n << ',' << fmt(ia.mean) << ',' << fmt(ia.low) << ',' << fmt(ia.high) << ','
         << fmt(ib.mean) << ',' << algo.flops_per_frame() << ','
         << fmt(std::accumulate(t.begin(), t.end(), 0.0) / t.size()) << ',' << ckpt << '\n';
    out << algo.name << ": SERLE " << fmt(ia.mean) << " dB, FLOPs/frame "
        << algo.flops_per_frame() << '\n';
  };
  for (const auto& b : baselines) emit(Algorithm::resolve(b, first.train.ols.fft_size), "");
  for (const auto& p : points) {
    const fs::path ckpt = p.dir / "best.ckpt";
    if (!(reuse && fs::exists(ckpt))) {
      fs::create_directories(p.dir);
      write_text(p.dir / "config.json", to_json(p.cfg).dump(2) + "\n");
      out << "training " << p.cfg.train.structure.label() << " H=" << p.cfg.train.hidden << '\n';
      Dataset ds;
      ds.train = load_scenes(m, "train", p.cfg.train_scenes, p.cfg.train.jobs);
      ds.val = load_scenes(m, "val", p.cfg.val_scenes, p.cfg.train.jobs);
      train(p.cfg.train, ds, p.cfg.seed).best.save(ckpt);
    }
    emit(Algorithm::resolve(ckpt.string(), p.cfg.train.ols.fft_size), ckpt.string());
  }
  write_text(out_dir / "sweep.csv", rows.str());
  out << "wrote " << (out_dir / "sweep.csv").string() << '\n';
  return kOk;
}

int cmd_cancel(const std::string& farend, const std::string& mic, const std::string& algorithm,
               const std::string& out_wav, int K, const std::string& baseline_config,
               const std::string& telemetry, std::ostream& out) {
  const WavData u = read_wav(farend);
  const WavData d = read_wav(mic);
  if (u.sample_rate != d.sample_rate)
    throw InvalidArgument("far-end and microphone sample rates differ");
  if (u.sample_rate != 16000.0)
    throw InvalidArgument("unsupported sample rate " + fmt(u.sample_rate) + " Hz (only 16000)");
  if (u.samples.size() != d.samples.size())
    throw InvalidArgument("far-end and microphone lengths differ");
  const Algorithm algo = Algorithm::resolve(algorithm, K);
  auto aec = algo.make(load_baselines(baseline_config), u.sample_rate);

  std::ofstream tel;
  TelemetrySink sink;
  if (!telemetry.empty()) {
    tel.open(telemetry);
    if (!tel) throw IoError("cannot write " + telemetry);
    sink = [&](const FrameTelemetry& t, const FilterWeights&) { write_telemetry(tel, t); };
  }
  const SessionResult res = run_session(*aec, u.samples, d.samples, sink);
  write_wav(out_wav, res.e, u.sample_rate);
  out << "processed " << res.frames << " frames with " << algo.name << " -> " << out_wav << '\n';
  return kOk;
}

int cmd_plot_script(const std::string& kind, const std::string& csv, const std::string& out_path,
                    std::ostream& out) {
  std::ostringstream s;
  s << "# gnuplot script\nset datafile separator ','\nset key autotitle columnhead\nset grid\n";
  if (kind == "sweep") {
    s << "set terminal pngcairo size 900,600\nset output 'sweep.png'\n"
      << "set logscale x\nset xlabel 'FLOPs per frame (complex MACs)'\nset ylabel 'SERLE (dB)'\n"
      << "plot for [s in 'diagonal block banded'] '" << csv
      << "' using (strcol(1) eq s ? $9 : 1/0):5 with linespoints title s, \\\n"
      << "     '" << csv << "' using (strcol(1) eq 'none' ? 1 : 1/0):5 with points title 'baselines'\n";
  } else if (kind == "curve") {
    s << "set terminal pngcairo size 900,600\nset output 'training_curve.png'\n"
      << "set xlabel 'epoch'\nset ylabel 'meta-loss'\nset y2label 'val SERLE (dB)'\n"
      << "set ytics nomirror\nset y2tics\n"
      << "plot '" << csv << "' using 1:2 with lines title 'train loss', \\\n"
      << "     '" << csv << "' using 1:3 axes x1y2 with lines title 'val SERLE'\n";
  } else if (kind == "eval") {
    s << "set terminal pngcairo size 900,600\nset output 'eval.png'\n"
      << "set style data boxplot\nset ylabel 'SERLE (dB)'\nunset key\n"
      << "plot '" << csv << "' using (1):6:(0):2\n";
  } else {
    throw ConfigError("kind", "must be sweep, curve or eval");
  }
  if (out_path.empty() || out_path == "-") {
    out << s.str();
  } else {
    write_text(out_path, s.str());
    out << "wrote " << out_path << '\n';
  }
  return kOk;
}

int cmd_print_config(const std::string& kind, const std::string& path, std::ostream& out) {
  Json j = path.empty() ? Json::object() : read_json_file(path, true);
  if (kind == "train") {
    out << to_json(train_config_from_json(j)).dump(2) << '\n';
  } else if (kind == "scene") {
    out << to_json(scene_spec_from_json(j)).dump(2) << '\n';
  } else if (kind == "baseline") {
    out << to_json(baseline_params_from_json(j)).dump(2) << '\n';
  } else {
    throw ConfigError("kind", "must be train, scene or baseline");
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Higher-order learned adaptive filters for echo cancellation"};
  app.require_subcommand(1);

  GenDataOptions gen;
  std::string gen_spec_file, gen_preset = "desk", gen_ratio = "200,20,20";
  double gen_duration = 0.0;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic scene manifest");
  g->add_option("--spec", gen_spec_file, "Scene spec JSON (overrides the preset)");
  g->add_option("--preset", gen_preset, "desk, full or noiseless")->capture_default_str();
  g->add_option("--count", gen.count, "Number of scenes")->capture_default_str();
  g->add_option("--ratio", gen_ratio, "train,val,test split ratio")->capture_default_str();
  g->add_option("--seed", gen.seed, "Manifest seed")->capture_default_str();
  g->add_option("--duration", gen_duration, "Override scene duration in seconds");
  g->add_option("--out", gen.out_dir, "Output directory")->capture_default_str();
  g->add_flag("--write-wav", gen.write_wav, "Also export WAV files and sidecars");
  g->add_option("--jobs", gen.jobs, "Worker threads")->capture_default_str();

  std::string train_config, train_resume;
  auto* t = app.add_subcommand("train", "Meta-train a learned optimizer");
  t->add_option("--config", train_config, "Train config JSON")->required();
  t->add_option("--resume", train_resume, "Resumable checkpoint (last.ckpt)");

  CommonEval ev;
  std::string eval_out = "eval.csv";
  auto* e = app.add_subcommand("eval", "Evaluate checkpoints and baselines on a manifest split");
  e->add_option("--algorithm,-a", ev.algorithms, "nlms, rls, kf or a checkpoint path")->required();
  e->add_option("--manifest", ev.manifest, "Manifest JSON")->required();
  e->add_option("--split", ev.split, "Split to evaluate")->capture_default_str();
  e->add_option("--limit", ev.limit, "Use at most this many scenes");
  e->add_option("--K", ev.K, "FFT size for baselines")->capture_default_str();
  e->add_option("--out", eval_out, "Per-scene CSV")->capture_default_str();
  e->add_option("--bootstrap", ev.bootstrap, "Bootstrap resamples")->capture_default_str();
  e->add_option("--seed", ev.seed, "Bootstrap seed");
  e->add_option("--baseline-config", ev.baseline_config, "Baseline hyperparameters JSON");
  e->add_option("--jobs", ev.jobs, "Worker threads")->capture_default_str();

  std::string sweep_config;
  bool sweep_reuse = false;
  auto* sw = app.add_subcommand("sweep", "Train and evaluate a (structure, B, H) grid");
  sw->add_option("--config", sweep_config, "Sweep config JSON")->required();
  sw->add_flag("--reuse", sweep_reuse, "Skip training where best.ckpt already exists");

  std::string c_far, c_mic, c_algo = "kf", c_out, c_baseline, c_tel;
  int c_K = 512;
  auto* c = app.add_subcommand("cancel", "Cancel echo in a far-end / microphone WAV pair");
  c->add_option("--farend", c_far, "Far-end WAV (16 kHz mono)")->required();
  c->add_option("--mic", c_mic, "Microphone WAV (16 kHz mono)")->required();
  c->add_option("--algorithm,-a", c_algo, "nlms, rls, kf or a checkpoint path")->capture_default_str();
  c->add_option("--out", c_out, "Output WAV (error signal)")->required();
  c->add_option("--K", c_K, "FFT size for baselines")->capture_default_str();
  c->add_option("--baseline-config", c_baseline, "Baseline hyperparameters JSON");
  c->add_option("--telemetry", c_tel, "Per-frame telemetry (JSON lines)");

  std::string p_kind = "sweep", p_csv, p_out;
  auto* p = app.add_subcommand("plot-script", "Emit a gnuplot script for a result CSV");
  p->add_option("--kind", p_kind, "sweep, curve or eval")->capture_default_str();
  p->add_option("--csv", p_csv, "Input CSV")->required();
  p->add_option("--out", p_out, "Script path (default stdout)");

  std::string pc_kind = "train", pc_file;
  auto* pc = app.add_subcommand("print-config", "Print a canonical config with all defaults");
  pc->add_option("--kind", pc_kind, "train, scene or baseline")->capture_default_str();
  pc->add_option("--config", pc_file, "Config JSON to canonicalize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*g) {
      gen.spec = gen_spec_file.empty() ? scene_preset(gen_preset)
                                       : scene_spec_from_json(read_json_file(gen_spec_file, true),
                                                              scene_preset(gen_preset));
      if (gen_duration > 0.0) gen.spec.duration_s = gen_duration;
      gen.ratios.clear();
      std::stringstream ss(gen_ratio);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          gen.ratios.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw ConfigError("ratio", "expects numbers like 8,1,1");
        }
      }
      return cmd_gen_data(gen, out);
    }
    if (*t) return cmd_train(train_config, train_resume, out);
    if (*e) return cmd_eval(ev, eval_out, out);
    if (*sw) return cmd_sweep(sweep_config, sweep_reuse, out);
    if (*c) return cmd_cancel(c_far, c_mic, c_algo, c_out, c_K, c_baseline, c_tel, out);
    if (*p) return cmd_plot_script(p_kind, p_csv, p_out, out);
    if (*pc) return cmd_print_config(pc_kind, pc_file, out);
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << '\n';
    return kConfigError;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << '\n';
    return kNumericError;
  } catch (const UndefinedMetric& ex) {
    err << "numeric failure: " << ex.what() << '\n';
    return kNumericError;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& ex) {
    err << "i/o error: " << ex.what() << '\n';
    return kIoError;
  }
  return kOk;
}

}  // namespace hoaf::cli
