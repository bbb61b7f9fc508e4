#include "hoaf/neural.hpp"

#include <cmath>
#include <random>

#include "hoaf/errors.hpp"

namespace hoaf {

// ---- DependencyStructure ---------------------------------------------------

DependencyStructure DependencyStructure::diagonal() {
  return DependencyStructure(StructureKind::Diagonal, 1);
}

DependencyStructure DependencyStructure::block(int group_size) {
  if (group_size <= 1) throw InvalidArgument("block structure needs B > 1");
  return DependencyStructure(StructureKind::Block, group_size);
}

DependencyStructure DependencyStructure::banded(int group_size) {
  if (group_size < 2 || group_size % 2 != 0)
    throw InvalidArgument("banded structure needs an even B >= 2");
  return DependencyStructure(StructureKind::Banded, group_size);
}

DependencyStructure DependencyStructure::parse(const std::string& kind, int group_size) {
  if (kind == "diagonal") return diagonal();
  if (kind == "block") return block(group_size);
  if (kind == "banded") return banded(group_size);
  throw InvalidArgument("unknown dependency structure '" + kind + "'");
}

int DependencyStructure::stride() const {
  switch (kind_) {
    case StructureKind::Diagonal: return 1;
    case StructureKind::Block: return window_;
    case StructureKind::Banded: return window_ / 2;
  }
  return 1;
}

int DependencyStructure::groups(int fft_size) const { return fft_size / stride(); }

void DependencyStructure::validate(int fft_size) const {
  if (fft_size <= 0) throw InvalidArgument("fft size must be positive");
  if (fft_size % window_ != 0)
    throw InvalidArgument("group size B=" + std::to_string(window_) +
                          " does not divide K=" + std::to_string(fft_size));
}

std::string DependencyStructure::kind_name() const {
  switch (kind_) {
    case StructureKind::Diagonal: return "diagonal";
    case StructureKind::Block: return "block";
    case StructureKind::Banded: return "banded";
  }
  return "unknown";
}

std::string DependencyStructure::label() const {
  if (kind_ == StructureKind::Diagonal) return "diagonal";
  return kind_name() + "-" + std::to_string(window_);
}

// ---- Dense -----------------------------------------------------------------

ComplexMatrix ComplexDense::forward(const ComplexMatrix& x) const {
  ComplexMatrix y = weight * x;
  y.colwise() += bias;
  return y;
}

ComplexMatrix ComplexDense::backward(const ComplexMatrix& x, const ComplexMatrix& y_bar,
                                     ComplexDense& grad) const {
  grad.weight.noalias() += y_bar * x.adjoint();
  grad.bias += y_bar.rowwise().sum();
  return weight.adjoint() * y_bar;
}

// ---- Activations -----------------------------------------------------------

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Adjoint of a split activation given its output f and f'(v) = deriv(f).
template <typename Deriv>
ComplexMatrix split_backward(const ComplexMatrix& out, const ComplexMatrix& out_bar, Deriv deriv) {
  ComplexMatrix in_bar(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const Complex f = out.data()[i];
    const Complex g = out_bar.data()[i];
    in_bar.data()[i] = Complex(g.real() * deriv(f.real()), g.imag() * deriv(f.imag()));
  }
  return in_bar;
}

double sigmoid_deriv(double s) { return s * (1.0 - s); }
double tanh_deriv(double t) { return 1.0 - t * t; }

}  // namespace

ComplexMatrix split_sigmoid(const ComplexMatrix& x) {
  return x.unaryExpr([](const Complex& z) { return Complex(sigmoid(z.real()), sigmoid(z.imag())); });
}

ComplexMatrix split_tanh(const ComplexMatrix& x) {
  return x.unaryExpr(
      [](const Complex& z) { return Complex(std::tanh(z.real()), std::tanh(z.imag())); });
}

// ---- GRU -------------------------------------------------------------------

ComplexMatrix gru_step(const ComplexGruLayer& layer, const ComplexMatrix& x,
                       const ComplexMatrix& h, GruCache* cache) {
  const int H = layer.hidden();
  if (x.rows() != layer.inputs() || h.rows() != H || x.cols() != h.cols())
    throw InvalidArgument("gru_step: shape mismatch");

  ComplexMatrix gates = layer.w_input * x;
  gates.topRows(2 * H).noalias() += layer.w_hidden.topRows(2 * H) * h;
  gates.colwise() += layer.bias;

  ComplexMatrix z = split_sigmoid(gates.topRows(H));
  ComplexMatrix r = split_sigmoid(gates.middleRows(H, H));
  ComplexMatrix rh = r.cwiseProduct(h);
  ComplexMatrix cand = gates.bottomRows(H);
  cand.noalias() += layer.w_hidden.bottomRows(H) * rh;
  ComplexMatrix a = split_tanh(cand);

  ComplexMatrix h_next = h + z.cwiseProduct(a - h);
  if (!h_next.allFinite()) throw NumericError("non-finite values in gru state");
  if (cache) {
    cache->x = x;
    cache->h = h;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->a = std::move(a);
    cache->rh = std::move(rh);
  }
  return h_next;
}

std::pair<ComplexMatrix, ComplexMatrix> gru_backward(const ComplexGruLayer& layer,
                                                     const GruCache& c,
                                                     const ComplexMatrix& h_next_bar,
                                                     ComplexGruLayer& grad) {
  const int H = layer.hidden();
  const Eigen::Index C = c.h.cols();

  const ComplexMatrix z_bar = h_next_bar.cwiseProduct((c.a - c.h).conjugate());
  const ComplexMatrix a_bar = h_next_bar.cwiseProduct(c.z.conjugate());
  ComplexMatrix h_bar =
      h_next_bar.cwiseProduct((ComplexMatrix::Ones(H, C) - c.z).conjugate());

  ComplexMatrix gates_bar(3 * H, C);
  gates_bar.topRows(H) = split_backward(c.z, z_bar, sigmoid_deriv);
  gates_bar.bottomRows(H) = split_backward(c.a, a_bar, tanh_deriv);

  const auto cand_bar = gates_bar.bottomRows(H);
  grad.w_hidden.bottomRows(H).noalias() += cand_bar * c.rh.adjoint();
  const ComplexMatrix rh_bar = layer.w_hidden.bottomRows(H).adjoint() * cand_bar;
  const ComplexMatrix r_bar = rh_bar.cwiseProduct(c.h.conjugate());
  h_bar += rh_bar.cwiseProduct(c.r.conjugate());
  gates_bar.middleRows(H, H) = split_backward(c.r, r_bar, sigmoid_deriv);

  grad.w_input.noalias() += gates_bar * c.x.adjoint();
  grad.bias += gates_bar.rowwise().sum();
  const auto zr_bar = gates_bar.topRows(2 * H);
  grad.w_hidden.topRows(2 * H).noalias() += zr_bar * c.h.adjoint();
  h_bar.noalias() += layer.w_hidden.topRows(2 * H).adjoint() * zr_bar;

  ComplexMatrix x_bar = layer.w_input.adjoint() * gates_bar;
  return {std::move(x_bar), std::move(h_bar)};
}

// ---- Log scaling -----------------------------------------------------------

Complex log_scale(Complex z) {
  const double r = std::abs(z);
  if (r == 0.0) return Complex(0.0, 0.0);
  return z * (std::log1p(r) / r);
}

ComplexMatrix log_scale(const ComplexMatrix& x) {
  return x.unaryExpr([](const Complex& z) { return log_scale(z); });
}

ComplexMatrix log_scale_backward(const ComplexMatrix& x, const ComplexMatrix& y_bar) {
  // y = s(r) z with s(r) = ln(1 + r) / r; x_bar = s v + (s'(r) / r) Re(conj(v) z) z.
  ComplexMatrix x_bar(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Complex z = x.data()[i];
    const Complex v = y_bar.data()[i];
    const double r = std::abs(z);
    if (r < 1e-12) {
      x_bar.data()[i] = v;
      continue;
    }
    const double s = std::log1p(r) / r;
    const double ds = (1.0 / (1.0 + r) - s) / r;
    x_bar.data()[i] = s * v + (ds / r) * (std::conj(v) * z).real() * z;
  }
  return x_bar;
}

// ---- Group sampling ----------------------------------------------------------

ComplexMatrix group_patches(const DependencyStructure& s, const ComplexMatrix& xi) {
  const int K = static_cast<int>(xi.rows());
  if (xi.cols() != kFeatureChannels)
    throw InvalidArgument("optimizer input must have 5 feature channels");
  s.validate(K);
  const int B = s.window();
  const int C = s.groups(K);
  ComplexMatrix patches(kFeatureChannels * B, C);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < B; ++j) {
      const int k = s.bin(c, j, K);
      for (int ch = 0; ch < kFeatureChannels; ++ch) patches(j * kFeatureChannels + ch, c) = xi(k, ch);
    }
  return patches;
}

ComplexMatrix group_patches_adjoint(const DependencyStructure& s, const ComplexMatrix& patches_bar,
                                    int fft_size) {
  const int B = s.window();
  const int C = static_cast<int>(patches_bar.cols());
  ComplexMatrix xi_bar = ComplexMatrix::Zero(fft_size, kFeatureChannels);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < B; ++j) {
      const int k = s.bin(c, j, fft_size);
      for (int ch = 0; ch < kFeatureChannels; ++ch)
        xi_bar(k, ch) += patches_bar(j * kFeatureChannels + ch, c);
    }
  return xi_bar;
}

ComplexMatrix downsample(const GroupSampler& sampler, const ComplexMatrix& xi) {
  return sampler.down.forward(group_patches(sampler.structure, xi));
}

ComplexVector upsample(const GroupSampler& sampler, const ComplexMatrix& group_updates,
                       int fft_size) {
  const auto& s = sampler.structure;
  s.validate(fft_size);
  const int C = s.groups(fft_size);
  if (group_updates.cols() != C || group_updates.rows() != sampler.up.inputs())
    throw InvalidArgument("upsample: group update matrix has wrong shape");
  const ComplexMatrix local = sampler.up.forward(group_updates);  // B x C
  ComplexVector delta = ComplexVector::Zero(fft_size);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < s.window(); ++j) delta[s.bin(c, j, fft_size)] += local(j, c);
  return delta;
}

ComplexMatrix scatter_adjoint(const DependencyStructure& s, const ComplexVector& delta_bar,
                              int groups) {
  const int K = static_cast<int>(delta_bar.size());
  ComplexMatrix local_bar(s.window(), groups);
  for (int c = 0; c < groups; ++c)
    for (int j = 0; j < s.window(); ++j) local_bar(j, c) = delta_bar[s.bin(c, j, K)];
  return local_bar;
}

// ---- Parameters ------------------------------------------------------------

long long MetaParams::parameter_count() const {
  long long n = 0;
  for (const auto& t : tensors(*this)) n += t.size();
  return n;
}

namespace {

ComplexMatrix glorot(std::mt19937_64& rng, int rows, int cols, int fan_in, int fan_out) {
  // Complex variance 1 / (fan_in + fan_out), split evenly over real and imaginary parts.
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5 / (fan_in + fan_out)));
  ComplexMatrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      m(i, j) = Complex(re, im);
    }
  return m;
}

ComplexGruLayer init_gru(std::mt19937_64& rng, int inputs, int hidden) {
  ComplexGruLayer layer;
  layer.w_input.resize(3 * hidden, inputs);
  layer.w_hidden.resize(3 * hidden, hidden);
  for (int g = 0; g < 3; ++g) {
    layer.w_input.middleRows(g * hidden, hidden) = glorot(rng, hidden, inputs, inputs, hidden);
    layer.w_hidden.middleRows(g * hidden, hidden) = glorot(rng, hidden, hidden, hidden, hidden);
  }
  layer.bias = ComplexVector::Zero(3 * hidden);
  return layer;
}

}  // namespace

MetaParams init_params(const DependencyStructure& structure, int hidden, std::uint64_t seed) {
  if (hidden < 1) throw InvalidArgument("hidden size must be positive");
  std::mt19937_64 rng(seed);
  MetaParams p;
  p.sampler.structure = structure;
  const int in = kFeatureChannels * structure.window();
  const int B = structure.window();
  p.sampler.down.weight = glorot(rng, hidden, in, in, hidden);
  p.sampler.down.bias = ComplexVector::Zero(hidden);
  p.gru[0] = init_gru(rng, hidden, hidden);
  p.gru[1] = init_gru(rng, hidden, hidden);
  p.sampler.up.weight = glorot(rng, B, hidden, hidden, B);
  p.sampler.up.bias = ComplexVector::Zero(B);
  return p;
}

MetaParams zeros_like(const MetaParams& p) {
  MetaParams z = p;
  for (auto& t : tensors(z)) std::fill(t.data, t.data + t.size(), Complex(0.0, 0.0));
  return z;
}

namespace {

template <typename View, typename Params>
std::vector<View> collect(Params& p) {
  std::vector<View> out;
  auto add = [&](std::string name, auto& m) {
    out.push_back(View{std::move(name), m.data(), m.rows(), m.cols()});
  };
  add("sampler.down.weight", p.sampler.down.weight);
  add("sampler.down.bias", p.sampler.down.bias);
  for (int l = 0; l < 2; ++l) {
    const std::string prefix = "gru" + std::to_string(l) + ".";
    add(prefix + "w_input", p.gru[l].w_input);
    add(prefix + "w_hidden", p.gru[l].w_hidden);
    add(prefix + "bias", p.gru[l].bias);
  }
  add("sampler.up.weight", p.sampler.up.weight);
  add("sampler.up.bias", p.sampler.up.bias);
  return out;
}

}  // namespace

std::vector<TensorView> tensors(MetaParams& p) { return collect<TensorView>(p); }
std::vector<ConstTensorView> tensors(const MetaParams& p) {
  return collect<ConstTensorView>(p);
}

}  // namespace hoaf
