#pragma once

// Synthetic echo-cancellation scenes and evaluation metrics.

#include <cstdint>
#include <functional>
#include <string>

#include "hoaf/dsp.hpp"
#include "hoaf/neural.hpp"

namespace hoaf {

enum class NonlinearityKind { Identity, HardClip, Tanh };

struct Nonlinearity {
  NonlinearityKind kind = NonlinearityKind::Identity;
  double param = 1.0;  // clip level or tanh gain

  double apply(double x) const;
  RealVector apply(const RealVector& x) const;
  std::string name() const;
  static Nonlinearity parse(const std::string& name, double param);
};

struct SceneSpec {
  double sample_rate = 16000.0;
  double duration_s = 10.0;
  int rir_length = 2048;
  double rt60_s = 0.25;
  double farend_level_db_min = -30.0;  // dBFS RMS
  double farend_level_db_max = -20.0;
  bool double_talk = true;
  double near_fraction = 0.4;  // share of the scene with near-end speech
  double ser_db_min = -10.0;
  double ser_db_max = 10.0;
  bool noise = true;
  double snr_db_min = 10.0;  // echo-to-noise
  double snr_db_max = 40.0;
  double nonlinear_prob = 0.0;
  bool circular_shift = true;
  std::string farend_wav;  // optional recorded far-end signal

  void validate() const;
  int samples() const;

  // Full-scale scenes: 10 s at 16 kHz with 2048-tap echo paths.
  static SceneSpec full_preset();
  // Desk scale: echo paths that fit a K = 512 overlap-save filter.
  static SceneSpec desk_preset();
  // Single-talk, noiseless, linear: pure system identification.
  static SceneSpec noiseless_preset();
};

struct Scene {
  std::uint64_t seed = 0;
  double sample_rate = 16000.0;
  RealVector u;     // far end
  RealVector s;     // near-end speech
  RealVector n;     // near-end noise
  RealVector rir;   // true echo path
  Nonlinearity nonlinearity;
  RealVector echo;  // sigma(u) * rir
  RealVector d;     // microphone: echo + n + s
  double ser_db = 0.0;
  double snr_db = 0.0;
  int shift = 0;

  int samples() const { return static_cast<int>(u.size()); }
  double duration_s() const { return u.size() / sample_rate; }
  // Recomputes d from the stored components.
  RealVector remix() const;
};

Scene gen_scene(const SceneSpec& spec, std::uint64_t seed);

// Direct linear convolution truncated to the length of x.
RealVector convolve(const RealVector& x, const RealVector& h);

// Nonstationary speech-like signal with unit RMS.
RealVector speech_surrogate(int samples, double sample_rate, std::uint64_t seed);

inline constexpr double kMetricCapDb = 80.0;

// Segmental ERLE: frame-wise 10 log10(|d_u|^2 / |d_u - y|^2) over hops of
// `hop` samples, capped at +-80 dB, averaged over frames whose echo power is
// at least 1e-6 of the mean frame power.
double serle(const RealVector& echo, const RealVector& y, int hop);

enum class SiSdrScaling {
  Standard,      // a = <s_hat, s> / |s|^2
  UnitNorm,      // a = <s_hat, s> / |s|
};

double si_sdr(const RealVector& s, const RealVector& s_hat,
              SiSdrScaling scaling = SiSdrScaling::Standard);

// Complex multiply-accumulate counts of one learned-optimizer frame.
struct FlopModel {
  DependencyStructure structure = DependencyStructure::diagonal();
  int fft_size = 512;
  int hidden = 32;
};

struct FlopCount {
  long long groups = 0;
  long long sampler = 0;          // down + up kernels
  long long gru_matrix = 0;       // gate matrix products, quadratic in H
  long long gru_elementwise = 0;  // gate products r*h, (1-z)*h, z*a
  long long total() const { return sampler + gru_matrix + gru_elementwise; }
};

FlopCount flops_per_frame(const FlopModel& model);

struct RtfMeasurement {
  double rtf_mean = 0.0;
  double rtf_stddev = 0.0;
  int repeats = 0;
  double audio_seconds = 0.0;
  std::string environment;
};

RtfMeasurement measure_rtf(const std::function<void()>& session, double audio_seconds,
                           int repeats = 1);

}  // namespace hoaf
