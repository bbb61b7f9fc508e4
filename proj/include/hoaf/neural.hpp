#pragma once

// Complex-valued network layers for the learned update rule.
//
// Batched layout: every activation matrix has one column per frequency
// group, so a layer is evaluated for all C groups with one matrix product.
// Gradients use the real-pair convention (dL/dRe + i dL/dIm), under which
// the adjoint of z = a * b is a_bar = z_bar * conj(b).

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hoaf/dsp.hpp"

namespace hoaf {

using ComplexMatrix = Eigen::MatrixXcd;

// Number of per-bin input features: [grad, u, d, e, y].
inline constexpr int kFeatureChannels = 5;

enum class StructureKind { Diagonal, Block, Banded };

class DependencyStructure {
 public:
  static DependencyStructure diagonal();
  static DependencyStructure block(int group_size);
  static DependencyStructure banded(int group_size);
  // kind is one of "diagonal", "block", "banded".
  static DependencyStructure parse(const std::string& kind, int group_size);

  StructureKind kind() const { return kind_; }
  // Bins per group window; 1 for diagonal.
  int window() const { return window_; }
  int stride() const;
  int groups(int fft_size) const;
  // Throws InvalidArgument if the structure cannot tile fft_size bins.
  void validate(int fft_size) const;
  std::string kind_name() const;
  std::string label() const;  // e.g. "banded-4"

  // Bin index of position j inside group c (circular).
  int bin(int group, int offset, int fft_size) const {
    return (group * stride() + offset) % fft_size;
  }

  bool operator==(const DependencyStructure&) const = default;

 private:
  DependencyStructure(StructureKind kind, int window) : kind_(kind), window_(window) {}
  StructureKind kind_;
  int window_;
};

struct ComplexDense {
  ComplexMatrix weight;  // out x in
  ComplexVector bias;    // out

  int inputs() const { return static_cast<int>(weight.cols()); }
  int outputs() const { return static_cast<int>(weight.rows()); }
  ComplexMatrix forward(const ComplexMatrix& x) const;
  // Accumulates parameter gradients into grad and returns x_bar.
  ComplexMatrix backward(const ComplexMatrix& x, const ComplexMatrix& y_bar,
                         ComplexDense& grad) const;
};

// Gate rows are stacked [update; reset; candidate].
struct ComplexGruLayer {
  ComplexMatrix w_input;   // 3H x in
  ComplexMatrix w_hidden;  // 3H x H
  ComplexVector bias;      // 3H

  int hidden() const { return static_cast<int>(w_hidden.cols()); }
  int inputs() const { return static_cast<int>(w_input.cols()); }
};

struct GruCache {
  ComplexMatrix x, h, z, r, a, rh;
};

// Split activations: real sigmoid / tanh applied to real and imaginary
// parts independently.
ComplexMatrix split_sigmoid(const ComplexMatrix& x);
ComplexMatrix split_tanh(const ComplexMatrix& x);

//   z = sig(Wz x + Uz h + bz),  r = sig(Wr x + Ur h + br)
//   a = tanh(Wa x + Ua (r * h) + ba),  h' = (1 - z) * h + z * a
ComplexMatrix gru_step(const ComplexGruLayer& layer, const ComplexMatrix& x,
                       const ComplexMatrix& h, GruCache* cache = nullptr);
// Returns (x_bar, h_bar) and accumulates parameter gradients.
std::pair<ComplexMatrix, ComplexMatrix> gru_backward(const ComplexGruLayer& layer,
                                                     const GruCache& cache,
                                                     const ComplexMatrix& h_next_bar,
                                                     ComplexGruLayer& grad);

// ln(1 + |z|) e^{j arg z}, elementwise.
Complex log_scale(Complex z);
ComplexMatrix log_scale(const ComplexMatrix& x);
ComplexMatrix log_scale_backward(const ComplexMatrix& x, const ComplexMatrix& y_bar);

struct GroupSampler {
  DependencyStructure structure = DependencyStructure::diagonal();
  ComplexDense down;  // H x 5B convolution kernel
  ComplexDense up;    // B x H transposed-convolution kernel
};

// Gathers the C group windows of a K x 5 feature matrix into a 5B x C patch
// matrix. Feature (offset j, channel ch) sits in row j * 5 + ch.
ComplexMatrix group_patches(const DependencyStructure& s, const ComplexMatrix& xi);
ComplexMatrix group_patches_adjoint(const DependencyStructure& s, const ComplexMatrix& patches_bar,
                                    int fft_size);

// K x 5 -> H x C (one column per group).
ComplexMatrix downsample(const GroupSampler& sampler, const ComplexMatrix& xi);
// H x C -> K; overlapping contributions are summed.
ComplexVector upsample(const GroupSampler& sampler, const ComplexMatrix& group_updates,
                       int fft_size);
// Adjoint of the overlap-add scatter: K -> B x C.
ComplexMatrix scatter_adjoint(const DependencyStructure& s, const ComplexVector& delta_bar,
                              int groups);

struct MetaParams {
  GroupSampler sampler;
  ComplexGruLayer gru[2];

  const DependencyStructure& structure() const { return sampler.structure; }
  int hidden() const { return gru[0].hidden(); }
  long long parameter_count() const;
};

MetaParams init_params(const DependencyStructure& structure, int hidden, std::uint64_t seed);
MetaParams zeros_like(const MetaParams& p);

// Named views over every learnable tensor, in a fixed order.
struct TensorView {
  std::string name;
  Complex* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};
struct ConstTensorView {
  std::string name;
  const Complex* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};
std::vector<TensorView> tensors(MetaParams& p);
std::vector<ConstTensorView> tensors(const MetaParams& p);

}  // namespace hoaf
