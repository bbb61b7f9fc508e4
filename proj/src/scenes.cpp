#include "hoaf/scenes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include "hoaf/errors.hpp"
#include "hoaf/wav.hpp"

namespace hoaf {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per scene component.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t component) {
  return std::mt19937_64(splitmix64(seed * 0x100000001b3ULL + component));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double mean_power(const RealVector& x) {
  return x.size() == 0 ? 0.0 : x.squaredNorm() / static_cast<double>(x.size());
}

RealVector pink_noise(int n, std::mt19937_64& rng) {
  // Paul Kellet's economy pink filter.
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVector out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (int i = 0; i < n; ++i) {
    const double white = normal(rng);
    b0 = 0.99765 * b0 + white * 0.0990460;
    b1 = 0.96300 * b1 + white * 0.2965164;
    b2 = 0.57000 * b2 + white * 1.0526913;
    out[i] = b0 + b1 + b2 + white * 0.1848;
  }
  return out;
}

double rms(const RealVector& x) { return std::sqrt(mean_power(x)); }

}  // namespace

// ---- Nonlinearity ----------------------------------------------------------

double Nonlinearity::apply(double x) const {
  switch (kind) {
    case NonlinearityKind::Identity: return x;
    case NonlinearityKind::HardClip: return std::clamp(x, -param, param);
    case NonlinearityKind::Tanh: return std::tanh(param * x) / param;
  }
  return x;
}

RealVector Nonlinearity::apply(const RealVector& x) const {
  return x.unaryExpr([this](double v) { return apply(v); });
}

std::string Nonlinearity::name() const {
  switch (kind) {
    case NonlinearityKind::Identity: return "identity";
    case NonlinearityKind::HardClip: return "hardclip";
    case NonlinearityKind::Tanh: return "tanh";
  }
  return "identity";
}

Nonlinearity Nonlinearity::parse(const std::string& name, double param) {
  if (name == "identity") return {NonlinearityKind::Identity, 1.0};
  if (!(param > 0.0)) throw InvalidArgument("nonlinearity parameter must be positive");
  if (name == "hardclip") return {NonlinearityKind::HardClip, param};
  if (name == "tanh") return {NonlinearityKind::Tanh, param};
  throw InvalidArgument("unknown nonlinearity '" + name + "'");
}

// ---- Scene spec --------------------------------------------------------------

void SceneSpec::validate() const {
  if (!(sample_rate > 0.0)) throw InvalidArgument("scene sample_rate must be positive");
  if (!(duration_s > 0.0)) throw InvalidArgument("scene duration_s must be positive");
  if (rir_length < 1) throw InvalidArgument("scene rir_length must be >= 1");
  if (!(rt60_s > 0.0)) throw InvalidArgument("scene rt60_s must be positive");
  if (farend_level_db_min > farend_level_db_max)
    throw InvalidArgument("scene farend level range is inverted");
  if (ser_db_min > ser_db_max) throw InvalidArgument("scene SER range is inverted");
  if (snr_db_min > snr_db_max) throw InvalidArgument("scene SNR range is inverted");
  if (!(near_fraction > 0.0 && near_fraction <= 1.0))
    throw InvalidArgument("scene near_fraction must lie in (0, 1]");
  if (!(nonlinear_prob >= 0.0 && nonlinear_prob <= 1.0))
    throw InvalidArgument("scene nonlinear_prob must lie in [0, 1]");
}

int SceneSpec::samples() const { return static_cast<int>(std::lround(duration_s * sample_rate)); }

SceneSpec SceneSpec::full_preset() { return SceneSpec{}; }

SceneSpec SceneSpec::desk_preset() {
  SceneSpec s;
  s.rir_length = 224;
  s.rt60_s = 0.1;
  s.nonlinear_prob = 0.2;
  return s;
}

SceneSpec SceneSpec::noiseless_preset() {
  SceneSpec s = desk_preset();
  s.double_talk = false;
  s.noise = false;
  s.nonlinear_prob = 0.0;
  s.circular_shift = false;
  return s;
}

// ---- Generation --------------------------------------------------------------

RealVector convolve(const RealVector& x, const RealVector& h) {
  const Eigen::Index n = x.size();
  RealVector y = RealVector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index taps = std::min<Eigen::Index>(h.size(), i + 1);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < taps; ++m) acc += h[m] * x[i - m];
    y[i] = acc;
  }
  return y;
}

RealVector speech_surrogate(int samples, double sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng = stream(seed, 0x5eec);
  RealVector out = RealVector::Zero(samples);
  RealVector pink = pink_noise(samples, rng);
  pink /= std::max(rms(pink), 1e-12);
  std::normal_distribution<double> normal(0.0, 1.0);

  int pos = 0;
  int state = 0;  // 0 pause, 1 voiced, 2 unvoiced
  double prev = 0.0;
  while (pos < samples) {
    const double r = uniform(rng, 0.0, 1.0);
    state = state == 1 ? (r < 0.5 ? 2 : 0) : (r < 0.8 ? 1 : (state == 0 ? 2 : 0));
    double dur_s = state == 0 ? uniform(rng, 0.08, 0.4)
                              : (state == 1 ? uniform(rng, 0.12, 0.35) : uniform(rng, 0.04, 0.15));
    const int len = std::min(samples - pos, std::max(1, static_cast<int>(dur_s * sample_rate)));
    const double f0 = uniform(rng, 90.0, 240.0);
    const double gain = state == 1 ? uniform(rng, 0.6, 1.4) : uniform(rng, 0.15, 0.4);
    const int harmonics = static_cast<int>(std::min(30.0, 3800.0 / f0));
    std::vector<double> phases(harmonics);
    for (auto& p : phases) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (int i = 0; i < len; ++i) {
      const double env = std::sin(std::numbers::pi * (i + 0.5) / len);
      double v = 0.0;
      if (state == 1) {
        const double t = (pos + i) / sample_rate;
        const double f = f0 * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * 5.0 * t));
        for (int h = 0; h < harmonics; ++h)
          v += std::sin(2.0 * std::numbers::pi * f * (h + 1) * t + phases[h]) / (h + 1);
        v = 0.5 * v + 0.4 * pink[pos + i];
      } else if (state == 2) {
        const double white = normal(rng);
        v = white - prev;  // first difference tilts towards high frequencies
        prev = white;
      } else {
        v = 0.01 * pink[pos + i];
      }
      out[pos + i] = gain * env * v;
    }
    pos += len;
  }
  const double level = rms(out);
  if (level > 0.0) out /= level;
  return out;
}

namespace {

RealVector load_farend(const SceneSpec& spec, int n, std::mt19937_64& rng) {
  const WavData wav = read_wav(spec.farend_wav);
  if (std::abs(wav.sample_rate - spec.sample_rate) > 0.5)
    throw InvalidArgument("far-end WAV sample rate does not match the scene spec");
  if (wav.samples.size() == 0) throw InvalidArgument("far-end WAV is empty");
  const auto len = wav.samples.size();
  const auto offset = static_cast<Eigen::Index>(uniform(rng, 0.0, static_cast<double>(len)));
  RealVector u(n);
  for (int i = 0; i < n; ++i) u[i] = wav.samples[(offset + i) % len];
  return u;
}

}  // namespace

Scene gen_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.samples();
  Scene sc;
  sc.seed = seed;
  sc.sample_rate = spec.sample_rate;

  std::mt19937_64 levels = stream(seed, 1);
  std::mt19937_64 farend_rng = stream(seed, 2);
  if (spec.farend_wav.empty()) {
    sc.u = speech_surrogate(n, spec.sample_rate, splitmix64(seed ^ 0xfa));
  } else {
    sc.u = load_farend(spec, n, farend_rng);
    sc.u /= std::max(rms(sc.u), 1e-12);
  }
  sc.u *= std::pow(10.0, uniform(levels, spec.farend_level_db_min, spec.farend_level_db_max) / 20.0);

  // Echo path: exponentially decaying white noise after a short bulk delay.
  std::mt19937_64 rir_rng = stream(seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  sc.rir = RealVector::Zero(spec.rir_length);
  const int delay = std::min(spec.rir_length - 1, static_cast<int>(uniform(rir_rng, 0.0, 24.0)));
  const double decay = 6.9078 / (spec.rt60_s * spec.sample_rate);  // 60 dB over rt60
  for (int i = delay; i < spec.rir_length; ++i)
    sc.rir[i] = normal(rir_rng) * std::exp(-decay * (i - delay));
  sc.rir *= uniform(rir_rng, 0.3, 1.0) / std::max(sc.rir.norm(), 1e-12);

  std::mt19937_64 nl_rng = stream(seed, 4);
  if (uniform(nl_rng, 0.0, 1.0) < spec.nonlinear_prob) {
    const double peak = sc.u.cwiseAbs().maxCoeff();
    if (uniform(nl_rng, 0.0, 1.0) < 0.5)
      sc.nonlinearity = {NonlinearityKind::HardClip, peak * uniform(nl_rng, 0.5, 0.9)};
    else
      sc.nonlinearity = {NonlinearityKind::Tanh, uniform(nl_rng, 0.5, 2.0) / std::max(peak, 1e-9)};
  }
  sc.echo = convolve(sc.nonlinearity.apply(sc.u), sc.rir);
  const double echo_power = std::max(mean_power(sc.echo), 1e-20);

  sc.s = RealVector::Zero(n);
  if (spec.double_talk) {
    const int active = std::max(1, static_cast<int>(spec.near_fraction * n));
    const int start = (n - active) / 2;
    const RealVector speech = speech_surrogate(active, spec.sample_rate, splitmix64(seed ^ 0x5e));
    sc.ser_db = uniform(levels, spec.ser_db_min, spec.ser_db_max);
    // SER is measured against the near-end power while it is active.
    const double gain = std::sqrt(echo_power / std::pow(10.0, sc.ser_db / 10.0));
    RealVector centered = RealVector::Zero(n);
    centered.segment(start, active) = gain * speech;
    std::mt19937_64 shift_rng = stream(seed, 5);
    sc.shift = spec.circular_shift ? static_cast<int>(uniform(shift_rng, 0.0, n)) % n : 0;
    for (int i = 0; i < n; ++i) sc.s[(i + sc.shift) % n] = centered[i];
  }

  sc.n = RealVector::Zero(n);
  if (spec.noise) {
    std::mt19937_64 noise_rng = stream(seed, 6);
    RealVector noise = pink_noise(n, noise_rng);
    sc.snr_db = uniform(levels, spec.snr_db_min, spec.snr_db_max);
    noise *= std::sqrt(echo_power / std::pow(10.0, sc.snr_db / 10.0)) / std::max(rms(noise), 1e-12);
    sc.n = noise;
  }
  sc.d = sc.remix();
  return sc;
}

RealVector Scene::remix() const { return echo + n + s; }

// ---- Metrics -----------------------------------------------------------------

double serle(const RealVector& echo, const RealVector& y, int hop) {
  if (echo.size() != y.size()) throw InvalidArgument("serle: signals differ in length");
  if (hop < 1) throw InvalidArgument("serle: hop must be positive");
  const Eigen::Index frames = echo.size() / hop;
  if (frames == 0) throw UndefinedMetric("serle: signal shorter than one frame");

  std::vector<double> power(frames), residual(frames);
  double total = 0.0;
  for (Eigen::Index f = 0; f < frames; ++f) {
    power[f] = echo.segment(f * hop, hop).squaredNorm();
    residual[f] = (echo.segment(f * hop, hop) - y.segment(f * hop, hop)).squaredNorm();
    total += power[f];
  }
  const double threshold = 1e-6 * total / static_cast<double>(frames);
  double sum = 0.0;
  long active = 0;
  for (Eigen::Index f = 0; f < frames; ++f) {
    if (power[f] < threshold || power[f] <= 0.0) continue;
    double db = residual[f] > 0.0 ? 10.0 * std::log10(power[f] / residual[f]) : kMetricCapDb;
    sum += std::clamp(db, -kMetricCapDb, kMetricCapDb);
    ++active;
  }
  if (active == 0) throw UndefinedMetric("serle: every frame is silent");
  return sum / static_cast<double>(active);
}

double si_sdr(const RealVector& s, const RealVector& s_hat, SiSdrScaling scaling) {
  if (s.size() != s_hat.size()) throw InvalidArgument("si_sdr: signals differ in length");
  const double ref = s.squaredNorm();
  if (!(ref > 0.0)) throw InvalidArgument("si_sdr: reference signal is zero");
  const double dot = s_hat.dot(s);
  const double a = scaling == SiSdrScaling::Standard ? dot / ref : dot / std::sqrt(ref);
  const RealVector target = a * s;
  const double num = target.squaredNorm();
  const double den = (target - s_hat).squaredNorm();
  if (den <= 0.0) return num > 0.0 ? kMetricCapDb : -kMetricCapDb;
  if (num <= 0.0) return -kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

FlopCount flops_per_frame(const FlopModel& m) {
  m.structure.validate(m.fft_size);
  const long long C = m.structure.groups(m.fft_size);
  const long long B = m.structure.window();
  const long long H = m.hidden;
  FlopCount f;
  f.groups = C;
  f.sampler = C * (kFeatureChannels * B * H + H * B);
  f.gru_matrix = C * 2 * (3 * H * H + 3 * H * H);
  f.gru_elementwise = C * 2 * 3 * H;
  return f;
}

RtfMeasurement measure_rtf(const std::function<void()>& session, double audio_seconds,
                           int repeats) {
  if (!(audio_seconds > 0.0)) throw InvalidArgument("measure_rtf: audio duration must be positive");
  if (repeats < 1) throw InvalidArgument("measure_rtf: repeats must be >= 1");
  std::vector<double> rtfs;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    session();
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    if (!(secs >= 0.0)) throw std::runtime_error("measure_rtf: timer failure");
    rtfs.push_back(secs / audio_seconds);
  }
  RtfMeasurement m;
  m.repeats = repeats;
  m.audio_seconds = audio_seconds;
  for (double r : rtfs) m.rtf_mean += r;
  m.rtf_mean /= repeats;
  for (double r : rtfs) m.rtf_stddev += (r - m.rtf_mean) * (r - m.rtf_mean);
  m.rtf_stddev = repeats > 1 ? std::sqrt(m.rtf_stddev / (repeats - 1)) : 0.0;
  m.environment = "threads=" + std::to_string(std::thread::hardware_concurrency()) +
#if defined(__clang__)
                  " compiler=clang-" __clang_version__;
#elif defined(__GNUC__)
                  " compiler=gcc-" __VERSION__;
#else
                  " compiler=unknown";
#endif
  return m;
}

}  // namespace hoaf
