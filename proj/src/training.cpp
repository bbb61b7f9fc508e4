#include "hoaf/training.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "hoaf/errors.hpp"
#include "hoaf/session.hpp"
#include "parallel.hpp"

namespace hoaf {

double meta_loss(const RealVector& d, const RealVector& y) {
  if (d.size() != y.size()) throw InvalidArgument("meta_loss: window lengths differ");
  if (d.size() == 0) throw InvalidArgument("meta_loss: empty window");
  return std::log((d - y).squaredNorm() / static_cast<double>(d.size()) + kMetaLossEps);
}

SessionState SessionState::initial(const MetaParams& phi, const OlsConfig& cfg) {
  cfg.validate();
  return SessionState{FilterWeights::zeros(cfg.fft_size), GroupState::zeros(phi, cfg.fft_size),
                      TimeFrame::Zero(cfg.fft_size)};
}

namespace {

struct FrameCache {
  SpectrumFrame U;
  TimeFrame e;
  OptimizerInput xi;
  OptimizerCache opt;
};

struct Unroll {
  double loss = 0.0;
  double mean_square = 0.0;
  SessionState next;
  std::vector<FrameCache> frames;
};

Unroll unroll_window(const MetaParams& phi, const SessionState& state, const RealVector& u,
                     const RealVector& d, const OlsConfig& cfg, const WindowOptions& opt,
                     bool keep_cache) {
  const int R = cfg.hop_size;
  const int K = cfg.fft_size;
  if (u.size() != d.size() || u.size() == 0 || u.size() % R != 0)
    throw InvalidArgument("window must hold a whole number (>= 1) of hops");
  const int L = static_cast<int>(u.size() / R);
  if (opt.gradient_override && static_cast<int>(opt.gradient_override->size()) < L)
    throw InvalidArgument("gradient override shorter than the window");
  if (opt.gradient_record) opt.gradient_record->clear();

  Unroll out;
  out.next = state;
  if (keep_cache) out.frames.resize(L);
  double sq = 0.0;
  for (int t = 0; t < L; ++t) {
    auto& s = out.next;
    s.u_frame.head(R) = s.u_frame.tail(R).eval();
    s.u_frame.tail(R) = u.segment(t * R, R);
    const TimeFrame d_hop = d.segment(t * R, R);

    try {
      SpectrumFrame U = dft(s.u_frame);
      const OlsOutput y = ols_apply_freq(cfg, s.w, U);
      ErrorFrame err = af_error(d_hop, y.y_time, cfg);
      sq += err.e_time.squaredNorm();
      ComplexVector grad = opt.gradient_override ? (*opt.gradient_override)[t]
                                                 : filter_gradient(U, err.e_time, cfg);
      if (opt.gradient_record) opt.gradient_record->push_back(grad);
      OptimizerInput xi = build_input(grad, U, pad_and_transform(d_hop, cfg), err.e_freq, y.y_freq);
      OptimizerCache* oc = keep_cache ? &out.frames[t].opt : nullptr;
      OptimizerStep step = optimizer_step(phi, xi, s.psi, oc);
      s.w = apply_update(s.w, step.delta);
      s.psi = std::move(step.state);
      if (keep_cache) {
        out.frames[t].U = std::move(U);
        out.frames[t].e = std::move(err.e_time);
        out.frames[t].xi = std::move(xi);
      }
    } catch (const NumericError& e) {
      throw NumericError(e.what(), t);
    }
  }
  (void)K;
  out.mean_square = sq / static_cast<double>(u.size());
  out.loss = std::log(out.mean_square + kMetaLossEps);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite meta-loss");
  return out;
}

}  // namespace

double window_loss(const MetaParams& phi, const SessionState& state, const RealVector& u,
                   const RealVector& d, const OlsConfig& cfg, const WindowOptions& opt) {
  return unroll_window(phi, state, u, d, cfg, opt, false).loss;
}

WindowResult bptt_gradient(const MetaParams& phi, const SessionState& state, const RealVector& u,
                           const RealVector& d, const OlsConfig& cfg, const WindowOptions& opt) {
  Unroll fw = unroll_window(phi, state, u, d, cfg, opt, true);
  const int L = static_cast<int>(fw.frames.size());
  const int K = cfg.fft_size;
  // d loss / d y_t = -2 e_t / (R L (mean_square + eps)).
  const double scale = -2.0 / (static_cast<double>(u.size()) * (fw.mean_square + kMetaLossEps));

  WindowResult out;
  out.loss = fw.loss;
  out.grad = zeros_like(phi);
  ComplexVector w_bar = ComplexVector::Zero(K);  // adjoint of w_{t+1}
  GroupState psi_bar;
  for (auto& h : psi_bar.h) h = ComplexMatrix::Zero(phi.hidden(), phi.structure().groups(K));

  for (int t = L - 1; t >= 0; --t) {
    const FrameCache& fc = fw.frames[t];
    TimeFrame y_time_bar = scale * fc.e;
    SpectrumFrame y_freq_bar = SpectrumFrame::Zero(K);

    // The update emitted at the last frame does not reach the loss.
    if (t < L - 1) {
      OptimizerStepBar sb = optimizer_step_backward(phi, fc.opt, w_bar, psi_bar, K, out.grad);
      psi_bar = std::move(sb.state_bar);
      const ComplexMatrix raw_bar = log_scale_backward(fc.xi.raw, sb.features_bar);
      // e = d - y, and the error channel is dft([0; e]).
      y_time_bar -= pad_and_transform_adjoint(raw_bar.col(kErrorChannel), cfg);
      y_freq_bar = raw_bar.col(kOutputChannel);
    }
    // w_{t+1} = w_t + delta_t, so w_bar passes through unchanged.
    w_bar += ols_adjoint(fc.U, y_time_bar, y_freq_bar, cfg);
  }
  out.next = std::move(fw.next);
  return out;
}

WindowResult bptt_gradient(const MetaParams& phi, const RealVector& u_segment,
                           const RealVector& d_segment, int unroll, const OlsConfig& cfg) {
  const int R = cfg.hop_size;
  if (unroll < 1) throw InvalidArgument("unroll length must be >= 1");
  if (u_segment.size() < static_cast<Eigen::Index>(unroll + 1) * R ||
      d_segment.size() != u_segment.size())
    throw InvalidArgument("segment must span at least L + 1 hops");
  SessionState state = SessionState::initial(phi, cfg);
  state.u_frame.tail(R) = u_segment.head(R);
  return bptt_gradient(phi, state, u_segment.segment(R, unroll * R),
                       d_segment.segment(R, unroll * R), cfg);
}

// ---- Adam ----------------------------------------------------------------------

AdamState AdamState::init(const MetaParams& phi) {
  AdamState s;
  s.m = zeros_like(phi);
  s.v = zeros_like(phi);
  return s;
}

void adam_step(MetaParams& phi, AdamState& state, const MetaParams& grad, double lr) {
  auto p = tensors(phi);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  const auto g = tensors(grad);
  if (p.size() != g.size() || p.size() != m.size()) throw InvalidArgument("adam: tensor mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double b1 = state.beta1, b2 = state.beta2;
  auto update = [&](double& param, double& mom, double& var, double gr) {
    mom = b1 * mom + (1.0 - b1) * gr;
    var = b2 * var + (1.0 - b2) * gr * gr;
    param -= lr * (mom / c1) / (std::sqrt(var / c2) + state.eps);
  };
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size()) throw InvalidArgument("adam: shape mismatch in " + p[i].name);
    double* pd = reinterpret_cast<double*>(p[i].data);
    double* md = reinterpret_cast<double*>(m[i].data);
    double* vd = reinterpret_cast<double*>(v[i].data);
    const double* gd = reinterpret_cast<const double*>(g[i].data);
    // Interleaved (re, im) pairs are updated as independent real coordinates.
    for (Eigen::Index j = 0; j < 2 * p[i].size(); ++j) update(pd[j], md[j], vd[j], gd[j]);
  }
}

double global_norm(const MetaParams& grad) {
  double sq = 0.0;
  for (const auto& t : tensors(grad))
    for (Eigen::Index j = 0; j < t.size(); ++j) sq += std::norm(t.data[j]);
  return std::sqrt(sq);
}

double clip_global_norm(MetaParams& grad, double ceiling) {
  const double norm = global_norm(grad);
  if (norm > ceiling && norm > 0.0) {
    const double s = ceiling / norm;
    for (auto& t : tensors(grad))
      for (Eigen::Index j = 0; j < t.size(); ++j) t.data[j] *= s;
  }
  return norm;
}

void accumulate(MetaParams& into, const MetaParams& g, double scale) {
  auto a = tensors(into);
  const auto b = tensors(g);
  for (size_t i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < a[i].size(); ++j) a[i].data[j] += scale * b[i].data[j];
}

// ---- Schedule ------------------------------------------------------------------

PlateauSchedule::Decision PlateauSchedule::observe(double score) {
  Decision d;
  if (score > best) {
    best = score;
    since_best = 0;
    since_decay = 0;
    d.improved = true;
    return d;
  }
  ++since_best;
  ++since_decay;
  if (since_decay >= plateau_patience) {
    lr *= decay;
    since_decay = 0;
    d.decayed = true;
  }
  d.stop = since_best >= stop_patience;
  return d;
}

// ---- Checkpoints ---------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw IoError("checkpoint: bad number '" + s + "'");
  return v;
}

struct BlobWriter {
  std::ostringstream header;
  std::string blob;

  void add(const std::string& name, const ConstTensorView& t) {
    const size_t bytes = static_cast<size_t>(t.size()) * sizeof(Complex);
    header << "tensor " << name << ' ' << t.rows << ' ' << t.cols << ' ' << blob.size() << ' '
           << bytes << '\n';
    blob.append(reinterpret_cast<const char*>(t.data), bytes);
  }
  void add_all(const std::string& prefix, const MetaParams& p) {
    for (const auto& t : tensors(p)) add(prefix + t.name, t);
  }
};

struct TensorEntry {
  Eigen::Index rows = 0, cols = 0;
  size_t offset = 0, bytes = 0;
};

void read_into(MetaParams& p, const std::string& prefix,
               const std::map<std::string, TensorEntry>& index, const std::string& blob) {
  for (auto& t : tensors(p)) {
    auto it = index.find(prefix + t.name);
    if (it == index.end()) throw IoError("checkpoint: missing tensor " + prefix + t.name);
    const TensorEntry& e = it->second;
    if (e.rows != t.rows || e.cols != t.cols)
      throw IoError("checkpoint: tensor " + prefix + t.name + " has the wrong shape");
    if (e.bytes != static_cast<size_t>(t.size()) * sizeof(Complex) || e.offset + e.bytes > blob.size())
      throw IoError("checkpoint: tensor " + prefix + t.name + " is truncated");
    std::memcpy(reinterpret_cast<char*>(t.data), blob.data() + e.offset, e.bytes);
  }
}

}  // namespace

std::string Checkpoint::serialize() const {
  static_assert(std::endian::native == std::endian::little);
  BlobWriter w;
  w.add_all("", params);
  if (progress) {
    w.add_all("best.", progress->best_params);
    w.add_all("adam.m.", progress->adam.m);
    w.add_all("adam.v.", progress->adam.v);
  }
  std::ostringstream h;
  const auto& s = params.structure();
  h << "hoaf-checkpoint\n"
    << "schema_version " << kSchemaVersion << '\n'
    << "structure " << s.kind_name() << '\n'
    << "B " << s.window() << '\n'
    << "H " << params.hidden() << '\n'
    << "K " << fft_size << '\n'
    << "seed " << seed << '\n'
    << "epoch " << epoch << '\n'
    << "val_score " << format_double(val_score) << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw InvalidArgument("checkpoint metadata must be single-line without spaces in keys");
    h << "meta " << k << ' ' << v << '\n';
  }
  if (progress) {
    const auto& p = *progress;
    h << "progress.epoch " << p.epoch << '\n'
      << "progress.adam.step " << p.adam.step << '\n'
      << "progress.adam.beta1 " << format_double(p.adam.beta1) << '\n'
      << "progress.adam.beta2 " << format_double(p.adam.beta2) << '\n'
      << "progress.adam.eps " << format_double(p.adam.eps) << '\n'
      << "progress.lr " << format_double(p.schedule.lr) << '\n'
      << "progress.decay " << format_double(p.schedule.decay) << '\n'
      << "progress.plateau_patience " << p.schedule.plateau_patience << '\n'
      << "progress.stop_patience " << p.schedule.stop_patience << '\n'
      << "progress.best " << format_double(p.schedule.best) << '\n'
      << "progress.since_best " << p.schedule.since_best << '\n'
      << "progress.since_decay " << p.schedule.since_decay << '\n';
  }
  h << w.header.str() << "end_header\n";
  return h.str() + w.blob;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  const std::string end_marker = "end_header\n";
  const size_t end = bytes.find(end_marker);
  if (bytes.rfind("hoaf-checkpoint\n", 0) != 0 || end == std::string::npos)
    throw IoError("not a hoaf checkpoint");
  const std::string blob = bytes.substr(end + end_marker.size());

  std::istringstream in(bytes.substr(0, end));
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::string> fields;
  std::map<std::string, std::string> metadata;
  std::map<std::string, TensorEntry> index;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor") {
      std::string name;
      TensorEntry e;
      ls >> name >> e.rows >> e.cols >> e.offset >> e.bytes;
      if (!ls) throw IoError("checkpoint: malformed tensor entry");
      index[name] = e;
    } else if (key == "meta") {
      std::string k;
      ls >> k;
      std::string rest;
      std::getline(ls, rest);
      metadata[k] = rest.empty() ? rest : rest.substr(1);
    } else if (!key.empty()) {
      std::string value;
      ls >> value;
      fields[key] = value;
    }
  }
  auto field = [&](const std::string& k) -> const std::string& {
    auto it = fields.find(k);
    if (it == fields.end()) throw IoError("checkpoint: missing header field " + k);
    return it->second;
  };
  if (std::stoi(field("schema_version")) != kSchemaVersion)
    throw IoError("checkpoint: unsupported schema version " + field("schema_version"));

  Checkpoint c;
  const auto structure = DependencyStructure::parse(field("structure"), std::stoi(field("B")));
  const int H = std::stoi(field("H"));
  c.fft_size = std::stoi(field("K"));
  c.seed = std::stoull(field("seed"));
  c.epoch = std::stoi(field("epoch"));
  c.val_score = parse_double(field("val_score"));
  c.metadata = std::move(metadata);
  c.params = zeros_like(init_params(structure, H, 0));
  read_into(c.params, "", index, blob);
  if (fields.count("progress.epoch")) {
    TrainingProgress p;
    p.epoch = std::stoi(field("progress.epoch"));
    p.adam = AdamState::init(c.params);
    p.adam.step = std::stol(field("progress.adam.step"));
    p.adam.beta1 = parse_double(field("progress.adam.beta1"));
    p.adam.beta2 = parse_double(field("progress.adam.beta2"));
    p.adam.eps = parse_double(field("progress.adam.eps"));
    p.schedule.lr = parse_double(field("progress.lr"));
    p.schedule.decay = parse_double(field("progress.decay"));
    p.schedule.plateau_patience = std::stoi(field("progress.plateau_patience"));
    p.schedule.stop_patience = std::stoi(field("progress.stop_patience"));
    p.schedule.best = parse_double(field("progress.best"));
    p.schedule.since_best = std::stoi(field("progress.since_best"));
    p.schedule.since_decay = std::stoi(field("progress.since_decay"));
    p.best_params = zeros_like(c.params);
    read_into(p.best_params, "best.", index, blob);
    read_into(p.adam.m, "adam.m.", index, blob);
    read_into(p.adam.v, "adam.v.", index, blob);
    c.progress = std::move(p);
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- Training loop -------------------------------------------------------------

void TrainConfig::validate() const {
  ols.validate();
  structure.validate(ols.fft_size);
  if (hidden < 1) throw ConfigError("H", "must be >= 1");
  if (unroll < 1) throw ConfigError("L", "must be >= 1");
  if (batch < 1) throw ConfigError("batch", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay", "must lie in (0, 1]");
  if (plateau_patience < 1) throw ConfigError("plateau_patience", "must be >= 1");
  if (stop_patience < 1) throw ConfigError("stop_patience", "must be >= 1");
  if (!(clip > 0.0)) throw ConfigError("clip", "must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs", "must be >= 1");
  if (max_hops < 0) throw ConfigError("max_hops", "must be >= 0");
  if (jobs < 1) throw ConfigError("jobs", "must be >= 1");
}

double mean_serle(const MetaParams& phi, const std::vector<Scene>& scenes, const OlsConfig& cfg,
                  int jobs) {
  if (scenes.empty()) throw InvalidArgument("mean_serle: no scenes");
  auto shared = std::make_shared<const MetaParams>(phi);
  std::vector<double> scores(scenes.size());
  detail::parallel_for(static_cast<int>(scenes.size()), jobs, [&](int i) {
    const SessionResult r = run_aec_session(shared, phi.structure(), scenes[i], cfg);
    scores[i] = serle(scenes[i].echo, r.y, cfg.hop_size);
  });
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, std::uint64_t seed,
                  const TrainHooks& hooks, const Checkpoint* resume) {
  config.validate();
  if (dataset.train.empty()) throw InvalidArgument("train: empty training split");
  if (dataset.val.empty() && !hooks.validate) throw InvalidArgument("train: empty validation split");
  const OlsConfig& cfg = config.ols;
  const int R = cfg.hop_size;
  const int L = config.unroll;

  MetaParams phi = init_params(config.structure, config.hidden, seed);
  TrainingProgress progress;
  progress.adam = AdamState::init(phi);
  progress.schedule.lr = config.lr;
  progress.schedule.decay = config.lr_decay;
  progress.schedule.plateau_patience = config.plateau_patience;
  progress.schedule.stop_patience = config.stop_patience;
  progress.best_params = phi;
  double best_score = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  if (resume) {
    if (!resume->progress) throw InvalidArgument("train: checkpoint is not resumable");
    if (!(resume->params.structure() == config.structure) ||
        resume->params.hidden() != config.hidden || resume->fft_size != cfg.fft_size)
      throw InvalidArgument("train: resume checkpoint does not match the configuration");
    phi = resume->params;
    progress = *resume->progress;
    best_score = progress.schedule.best;
    best_epoch = resume->epoch;
  }

  auto validate = [&](const MetaParams& p) {
    return hooks.validate ? hooks.validate(p) : mean_serle(p, dataset.val, cfg, config.jobs);
  };

  auto make_checkpoint = [&](const MetaParams& p, int epoch, double score) {
    Checkpoint c;
    c.params = p;
    c.fft_size = cfg.fft_size;
    c.seed = seed;
    c.epoch = epoch;
    c.val_score = score;
    c.metadata["L"] = std::to_string(L);
    c.metadata["batch"] = std::to_string(config.batch);
    c.metadata["R"] = std::to_string(R);
    return c;
  };

  TrainResult result;
  const int n_train = static_cast<int>(dataset.train.size());
  for (int epoch = progress.epoch + 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, norm_sum = 0.0;
    long updates = 0;
    for (int b0 = 0; b0 < n_train; b0 += config.batch) {
      const int nb = std::min(config.batch, n_train - b0);
      std::vector<SessionState> states;
      long hops = std::numeric_limits<long>::max();
      for (int i = 0; i < nb; ++i) {
        const Scene& sc = dataset.train[order[b0 + i]];
        states.push_back(SessionState::initial(phi, cfg));
        hops = std::min<long>(hops, sc.samples() / R);
      }
      if (config.max_hops > 0) hops = std::min<long>(hops, config.max_hops);
      const long windows = hops / L;
      for (long wdx = 0; wdx < windows; ++wdx) {
        std::vector<WindowResult> results(nb);
        detail::parallel_for(nb, config.jobs, [&](int i) {
          const Scene& sc = dataset.train[order[b0 + i]];
          const Eigen::Index start = wdx * L * R;
          try {
            results[i] = bptt_gradient(phi, states[i], sc.u.segment(start, L * R),
                                       sc.d.segment(start, L * R), cfg);
          } catch (const NumericError& e) {
            throw NumericError(std::string("training diverged in scene ") +
                               std::to_string(sc.seed) + " epoch " + std::to_string(epoch) +
                               ": " + e.what(), wdx * L + std::max(0L, e.frame()));
          }
        });
        MetaParams grad = zeros_like(phi);
        double loss = 0.0;
        for (int i = 0; i < nb; ++i) {
          accumulate(grad, results[i].grad, 1.0 / nb);
          loss += results[i].loss / nb;
          states[i] = std::move(results[i].next);
        }
        norm_sum += clip_global_norm(grad, config.clip);
        adam_step(phi, progress.adam, grad, progress.schedule.lr);
        loss_sum += loss;
        ++updates;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = updates ? loss_sum / updates : 0.0;
    rec.grad_norm = updates ? norm_sum / updates : 0.0;
    rec.lr = progress.schedule.lr;
    rec.val_serle = validate(phi);
    if (!std::isfinite(rec.val_serle) || !std::isfinite(rec.train_loss))
      throw NumericError("training diverged: non-finite loss or validation score at epoch " +
                         std::to_string(epoch));
    const auto decision = progress.schedule.observe(rec.val_serle);
    rec.improved = decision.improved;
    if (decision.improved) {
      progress.best_params = phi;
      best_score = rec.val_serle;
      best_epoch = epoch;
    }
    progress.epoch = epoch;
    result.history.push_back(rec);

    Checkpoint last = make_checkpoint(phi, epoch, rec.val_serle);
    last.progress = progress;
    if (hooks.on_epoch) hooks.on_epoch(rec, last);
    result.last = std::move(last);
    if (decision.stop) break;
  }
  result.best = make_checkpoint(progress.best_params, best_epoch, best_score);
  if (result.history.empty() && resume) result.last = *resume;
  return result;
}

}  // namespace hoaf
