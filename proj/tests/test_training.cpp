#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hoaf/errors.hpp"
#include "hoaf/training.hpp"
#include "support/oracles.hpp"

using namespace hoaf;
using namespace hoaf::testing;

namespace {

MetaParams busy_params(const DependencyStructure& s, int H, std::uint64_t seed) {
  MetaParams p = init_params(s, H, seed);
  p.sampler.down.bias = random_complex(H) * 0.3;
  p.sampler.up.bias = random_complex(s.window()) * 0.05;
  p.sampler.up.weight *= 0.2;
  for (auto& g : p.gru) g.bias = random_complex(3 * H) * 0.3;
  return p;
}

SessionState random_state(const MetaParams& p, const OlsConfig& cfg) {
  SessionState s = SessionState::initial(p, cfg);
  s.w.w = project_filter(random_complex(cfg.fft_size) * 0.3, cfg);
  s.u_frame = random_real(cfg.fft_size);
  for (auto& h : s.psi.h) h = random_complex(h.rows(), h.cols()) * 0.5;
  return s;
}

struct FdCheck {
  double rel = 0.0;
  double analytic_norm = 0.0;
};

// Compares bptt_gradient against central differences of the window loss
// on `coords` random parameter coordinates. The gradient channel is frozen
// at its recorded values so both routes see the same first-order model.
FdCheck check_bptt(const DependencyStructure& s, int K, int H, int L, int coords,
                   std::uint64_t seed) {
  const OlsConfig cfg = OlsConfig::with_fft_size(K);
  MetaParams phi = busy_params(s, H, seed);
  const SessionState state = random_state(phi, cfg);
  const RealVector u = random_real(L * cfg.hop_size);
  const RealVector d = random_real(L * cfg.hop_size);

  std::vector<ComplexVector> recorded;
  WindowOptions rec;
  rec.gradient_record = &recorded;
  const WindowResult res = bptt_gradient(phi, state, u, d, cfg, rec);
  WindowOptions frozen;
  frozen.gradient_override = &recorded;

  auto views = tensors(phi);
  const auto grads = tensors(static_cast<const MetaParams&>(res.grad));
  std::mt19937_64 pick(seed);
  ComplexVector analytic(coords), numeric(coords);
  for (int i = 0; i < coords; ++i) {
    const size_t t = pick() % views.size();
    const Eigen::Index j = static_cast<Eigen::Index>(pick() % views[t].size());
    analytic[i] = grads[t].data[j];
    numeric[i] = central_difference([&] { return window_loss(phi, state, u, d, cfg, frozen); },
                                    views[t].data[j], 1e-6);
  }
  return {rel_err(analytic, numeric), analytic.norm()};
}

}  // namespace

TEST_CASE("meta_loss") {
  const RealVector d = random_real(40);
  CHECK(meta_loss(d, d) == doctest::Approx(std::log(kMetaLossEps)).epsilon(1e-15));
  CHECK(std::abs(meta_loss(RealVector(d.array() + 1.0), d) - std::log(1.0 + kMetaLossEps)) < 1e-15);
  const RealVector y = random_real(40);
  double sum = 0.0;
  for (int i = 0; i < 40; ++i) sum += (d[i] - y[i]) * (d[i] - y[i]);
  CHECK(std::abs(meta_loss(d, y) - std::log(sum / 40 + 1e-9)) < 1e-12);
  CHECK_THROWS_AS(meta_loss(RealVector(), RealVector()), InvalidArgument);
  CHECK_THROWS_AS(meta_loss(d, RealVector(y.head(3))), InvalidArgument);
}

TEST_CASE("bptt gradient matches finite differences at K=8, H=4, L=3") {
  for (const auto& s : {DependencyStructure::diagonal(), DependencyStructure::block(4),
                        DependencyStructure::banded(4)}) {
    INFO(s.label());
    const FdCheck r = check_bptt(s, 8, 4, 3, 50, 101);
    CHECK(r.analytic_norm > 0.0);
    CHECK(r.rel < 1e-3);
  }
}

TEST_CASE("bptt gradient over random tiny configurations") {
  std::mt19937_64 r(77);
  const DependencyStructure structures[] = {DependencyStructure::diagonal(),
                                            DependencyStructure::block(4),
                                            DependencyStructure::banded(4)};
  for (int trial = 0; trial < 20; ++trial) {
    const int K = (r() % 2) ? 16 : 8;
    const int H = (r() % 2) ? 4 : 2;
    const int L = 1 + static_cast<int>(r() % 3);
    const auto& s = structures[trial % 3];
    INFO("K=" << K << " H=" << H << " L=" << L << " " << s.label());
    const FdCheck c = check_bptt(s, K, H, L, 20, 200 + trial);
    CHECK(c.rel < 1e-3);
  }
}

TEST_CASE("single-frame windows have zero gradient") {
  const OlsConfig cfg = OlsConfig::with_fft_size(16);
  const MetaParams phi = busy_params(DependencyStructure::banded(4), 3, 5);
  const WindowResult res = bptt_gradient(phi, random_state(phi, cfg), random_real(8), random_real(8), cfg);
  CHECK(global_norm(res.grad) == 0.0);
}

TEST_CASE("zero network: only the output bias has a gradient") {
  const int K = 8, R = 4, L = 2, H = 2;
  const OlsConfig cfg = OlsConfig::with_fft_size(K);
  const MetaParams phi = zeros_like(init_params(DependencyStructure::diagonal(), H, 1));
  const RealVector u = random_real(L * R), d = random_real(L * R);
  const WindowResult res = bptt_gradient(phi, SessionState::initial(phi, cfg), u, d, cfg);

  // Hand derivation: every update is the output bias b on every bin, so
  // w_2 = b * 1 and only frame 2 depends on b. With y = 0 throughout,
  // dL/dy_2 = -2 d_2 / (R L ms), and the filter adjoint is A^H of the
  // frame-2 filtering map.
  const double ms = d.squaredNorm() / (L * R) + kMetaLossEps;
  RealVector frame(K);
  frame << u.head(R), u.tail(R);
  const ComplexVector U = dft_matrix(K) * frame.cast<Complex>();
  const ComplexMatrix A = output_trim_matrix(K, R) * U.asDiagonal() * filter_projection_matrix(K, R);
  const ComplexVector y_bar = (-2.0 / (R * L * ms)) * d.tail(R).cast<Complex>();
  const Complex b_bar = (A.adjoint() * y_bar).sum();

  CHECK(std::abs(res.grad.sampler.up.bias[0] - b_bar) < 1e-12 * std::abs(b_bar));
  CHECK(std::abs(b_bar) > 0.0);
  for (const auto& t : tensors(static_cast<const MetaParams&>(res.grad))) {
    if (t.name == "sampler.up.bias") continue;
    INFO(t.name);
    CHECK(Eigen::Map<const ComplexVector>(t.data, t.size()).norm() == 0.0);
  }
}

TEST_CASE("zero network with repeated hops: output-bias gradient scales in closed form") {
  // With identical hops after the first frame, frames 2..L all contribute
  // the same filter adjoint g with multiplicity (t - 1), and the window mean
  // divides by L. Hence b_bar(L) = c * L (L - 1) / 2 / L and
  // b_bar(4) = 3 b_bar(2) with the same sign pattern.
  const int K = 16, R = 8;
  const OlsConfig cfg = OlsConfig::with_fft_size(K);
  const MetaParams phi = zeros_like(init_params(DependencyStructure::diagonal(), 2, 1));
  const RealVector hop_u = random_real(R), hop_d = random_real(R);
  SessionState state = SessionState::initial(phi, cfg);
  state.u_frame.tail(R) = hop_u;
  auto bias_grad = [&](int L) {
    const RealVector u = hop_u.replicate(L, 1), d = hop_d.replicate(L, 1);
    return bptt_gradient(phi, state, u, d, cfg).grad.sampler.up.bias[0];
  };
  const Complex g2 = bias_grad(2), g4 = bias_grad(4);
  CHECK(std::abs(g4 - 3.0 * g2) < 1e-12 * std::abs(g4));
  CHECK(std::signbit(g4.real()) == std::signbit(g2.real()));
  CHECK(std::signbit(g4.imag()) == std::signbit(g2.imag()));
}

TEST_CASE("segment form primes the input buffer with the first hop") {
  const OlsConfig cfg = OlsConfig::with_fft_size(16);
  const MetaParams phi = busy_params(DependencyStructure::block(4), 3, 9);
  const RealVector u = random_real(4 * 8), d = random_real(4 * 8);
  const WindowResult a = bptt_gradient(phi, u, d, 3, cfg);
  SessionState s = SessionState::initial(phi, cfg);
  s.u_frame.tail(8) = u.head(8);
  const WindowResult b = bptt_gradient(phi, s, u.tail(24), d.tail(24), cfg);
  CHECK(a.loss == b.loss);
  CHECK(global_norm(a.grad) == global_norm(b.grad));
  CHECK_THROWS_AS(bptt_gradient(phi, u, d, 4, cfg), InvalidArgument);
}

TEST_CASE("numeric failures carry the frame index") {
  const OlsConfig cfg = OlsConfig::with_fft_size(8);
  const MetaParams phi = busy_params(DependencyStructure::diagonal(), 2, 3);
  RealVector d = random_real(12);
  d[9] = std::nan("");
  try {
    bptt_gradient(phi, SessionState::initial(phi, cfg), random_real(12), d, cfg);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.frame() == 2);
  }
}

TEST_CASE("Adam") {
  const MetaParams phi0 = init_params(DependencyStructure::block(4), 3, 4);

  SUBCASE("zero gradient leaves parameters and decays moments") {
    MetaParams phi = phi0;
    AdamState st = AdamState::init(phi);
    for (auto& t : tensors(st.m)) std::fill(t.data, t.data + t.size(), Complex(0.5, -0.5));
    adam_step(phi, st, zeros_like(phi), 1e-3);
    const auto m = tensors(static_cast<const MetaParams&>(st.m));
    CHECK(m[0].data[0] == Complex(0.45, -0.45));
    // With v = 0 the corrected step is m_hat / eps: check parameters only
    // when moments are zero as well.
    MetaParams phi2 = phi0;
    AdamState fresh = AdamState::init(phi2);
    adam_step(phi2, fresh, zeros_like(phi2), 1e-3);
    const auto a = tensors(static_cast<const MetaParams&>(phi2));
    const auto b = tensors(phi0);
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(std::memcmp(a[i].data, b[i].data, a[i].size() * sizeof(Complex)) == 0);
  }

  SUBCASE("first step moves each coordinate by about lr") {
    MetaParams phi = phi0;
    AdamState st = AdamState::init(phi);
    MetaParams g = zeros_like(phi);
    for (auto& t : tensors(g))
      for (Eigen::Index j = 0; j < t.size(); ++j) t.data[j] = random_complex(1)[0] + Complex(0.1, 0.1);
    const double lr = 1e-3;
    adam_step(phi, st, g, lr);
    const auto a = tensors(static_cast<const MetaParams&>(phi));
    const auto b = tensors(phi0);
    for (size_t i = 0; i < a.size(); ++i)
      for (Eigen::Index j = 0; j < a[i].size(); ++j) {
        const Complex step = a[i].data[j] - b[i].data[j];
        for (double c : {step.real(), step.imag()}) {
          CHECK(std::abs(c) >= 0.9 * lr);
          CHECK(std::abs(c) <= lr);
        }
      }
  }

  SUBCASE("matches a scalar Adam trace") {
    MetaParams phi = phi0;
    AdamState st = AdamState::init(phi);
    double p = phi.sampler.down.weight(1, 2).imag(), m = 0.0, v = 0.0;
    std::mt19937_64 r(3);
    for (int step = 1; step <= 10; ++step) {
      MetaParams g = zeros_like(phi);
      const double gi = randn(r);
      g.sampler.down.weight(1, 2) = Complex(randn(r), gi);
      adam_step(phi, st, g, 1e-2);
      m = 0.9 * m + 0.1 * gi;
      v = 0.999 * v + 0.001 * gi * gi;
      p -= 1e-2 * (m / (1 - std::pow(0.9, step))) / (std::sqrt(v / (1 - std::pow(0.999, step))) + 1e-8);
      CHECK(std::abs(phi.sampler.down.weight(1, 2).imag() - p) < 1e-12);
    }
  }
}

TEST_CASE("global-norm clipping") {
  MetaParams g = zeros_like(init_params(DependencyStructure::diagonal(), 2, 1));
  g.sampler.up.bias[0] = Complex(30.0, 40.0);
  CHECK(clip_global_norm(g, 10.0) == 50.0);
  CHECK(std::abs(global_norm(g) - 10.0) < 1e-12);
  CHECK(std::abs(g.sampler.up.bias[0] - Complex(6.0, 8.0)) < 1e-12);
  CHECK(clip_global_norm(g, 100.0) == doctest::Approx(10.0));
}

TEST_CASE("plateau schedule") {
  PlateauSchedule s;
  s.lr = 1e-4;
  int halvings = 0, halving_epoch = 0;
  for (int epoch = 1; epoch <= 6; ++epoch) {
    const auto d = s.observe(1.0);
    if (d.decayed) {
      ++halvings;
      halving_epoch = epoch;
    }
    CHECK_FALSE(d.stop);
  }
  CHECK(halvings == 1);
  CHECK(halving_epoch == 6);
  CHECK(s.lr == 5e-5);

  PlateauSchedule t;
  t.observe(2.0);
  int stop_epoch = 0;
  for (int epoch = 2; epoch <= 40 && !stop_epoch; ++epoch)
    if (t.observe(1.0).stop) stop_epoch = epoch;
  CHECK(stop_epoch == 17);
  CHECK(t.lr == doctest::Approx(1e-4 / 8));
}

TEST_CASE("content hash") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
}

TEST_CASE("checkpoint roundtrip") {
  Checkpoint c;
  c.params = busy_params(DependencyStructure::banded(4), 3, 12);
  c.fft_size = 16;
  c.seed = 99;
  c.epoch = 7;
  c.val_score = 1.0 / 3.0;
  c.metadata["note"] = "unit";
  TrainingProgress prog;
  prog.epoch = 7;
  prog.adam = AdamState::init(c.params);
  adam_step(c.params, prog.adam, c.params, 1e-3);
  prog.schedule.observe(0.25);
  prog.best_params = c.params;

  for (bool resumable : {false, true}) {
    if (resumable) c.progress = prog;
    const std::string bytes = c.serialize();
    const Checkpoint back = Checkpoint::deserialize(bytes);
    CHECK(back.serialize() == bytes);
    CHECK(back.val_score == c.val_score);
    CHECK(back.params.structure() == c.params.structure());
    CHECK(back.progress.has_value() == resumable);

    const auto dir = std::filesystem::temp_directory_path() / "hoaf_ckpt_test";
    std::filesystem::create_directories(dir);
    c.save(dir / "a.ckpt");
    Checkpoint::load(dir / "a.ckpt").save(dir / "b.ckpt");
    std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str() == bytes);
  }

  CHECK_THROWS_AS(Checkpoint::deserialize("not a checkpoint"), IoError);
  const std::string bytes = c.serialize();
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 8)), IoError);
  CHECK_THROWS_AS(Checkpoint::load("/nonexistent/x.ckpt"), IoError);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  c.ols = OlsConfig::with_fft_size(64);
  CHECK_NOTHROW(c.validate());
  c.unroll = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.unroll = 20;
  c.structure = DependencyStructure::block(3);
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.structure = DependencyStructure::diagonal();
  c.lr = -1.0;
  try {
    c.validate();
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "lr");
  }
}

namespace {

Dataset tiny_dataset() {
  SceneSpec spec = SceneSpec::desk_preset();
  spec.duration_s = 0.1;
  spec.rir_length = 16;
  Dataset ds;
  for (int i = 0; i < 4; ++i) ds.train.push_back(gen_scene(spec, 100 + i));
  for (int i = 0; i < 2; ++i) ds.val.push_back(gen_scene(spec, 200 + i));
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.ols = OlsConfig::with_fft_size(32);
  c.structure = DependencyStructure::banded(4);
  c.hidden = 4;
  c.unroll = 4;
  c.batch = 2;
  c.lr = 1e-3;
  c.max_epochs = 3;
  c.max_hops = 24;
  return c;
}

}  // namespace

TEST_CASE("training is deterministic and resumable") {
  const Dataset ds = tiny_dataset();
  const TrainConfig cfg = tiny_config();
  std::vector<Checkpoint> per_epoch;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord&, const Checkpoint& c) { per_epoch.push_back(c); };
  const TrainResult a = train(cfg, ds, 5, hooks);
  const TrainResult b = train(cfg, ds, 5);
  REQUIRE(a.history.size() == 3);
  CHECK(content_hash(a.best.serialize()) == content_hash(b.best.serialize()));
  CHECK(content_hash(a.last.serialize()) == content_hash(b.last.serialize()));

  // Resuming after epoch 1 reproduces the uninterrupted run.
  REQUIRE(per_epoch.size() == 3);
  const Checkpoint after_one = Checkpoint::deserialize(per_epoch[0].serialize());
  const TrainResult resumed = train(cfg, ds, 5, {}, &after_one);
  CHECK(resumed.history.size() == 2);
  CHECK(content_hash(resumed.last.serialize()) == content_hash(a.last.serialize()));
  CHECK(content_hash(resumed.best.serialize()) == content_hash(a.best.serialize()));

  for (const auto& rec : a.history) {
    CHECK(std::isfinite(rec.train_loss));
    CHECK(std::isfinite(rec.val_serle));
  }
}

TEST_CASE("parallel batch evaluation matches serial") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  const TrainResult serial = train(cfg, ds, 8);
  cfg.jobs = 3;
  const TrainResult parallel = train(cfg, ds, 8);
  CHECK(content_hash(serial.last.serialize()) == content_hash(parallel.last.serialize()));
}
