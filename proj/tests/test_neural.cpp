#include <cmath>
#include <limits>
#include <numbers>
#include <cstring>
#include <set>

#include "doctest.h"
#include "hoaf/errors.hpp"
#include "hoaf/neural.hpp"
#include "support/oracles.hpp"

using namespace hoaf;
using namespace hoaf::testing;

namespace {

constexpr double kLayerTol = 1e-5;

ComplexGruLayer random_gru(int in, int H, double scale = 0.5) {
  ComplexGruLayer g;
  g.w_input = random_complex(3 * H, in) * scale;
  g.w_hidden = random_complex(3 * H, H) * scale;
  g.bias = random_complex(3 * H) * scale;
  return g;
}

// Bins covered by group c, from the structure definition.
std::set<int> window_bins(const DependencyStructure& s, int c, int K) {
  std::set<int> bins;
  for (int j = 0; j < s.window(); ++j) bins.insert((c * reference_stride(s) + j) % K);
  return bins;
}

std::vector<DependencyStructure> grid_structures(int K) {
  std::vector<DependencyStructure> out{DependencyStructure::diagonal()};
  for (int B : {2, 4, 8, 16}) {
    if (B > K || K % B != 0) continue;
    out.push_back(DependencyStructure::block(B));
    out.push_back(DependencyStructure::banded(B));
  }
  return out;
}

}  // namespace

TEST_CASE("log_scale") {
  CHECK(log_scale(Complex(0.0, 0.0)) == Complex(0.0, 0.0));
  const Complex z = std::polar(std::numbers::e - 1.0, 0.7);
  const Complex out = log_scale(z);
  CHECK(std::abs(std::abs(out) - 1.0) < 1e-15);
  CHECK(std::abs(std::arg(out) - 0.7) < 1e-15);

  const ComplexMatrix x = random_complex(1000, 1) * 10.0;
  const ComplexMatrix y = log_scale(x);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    worst = std::max(worst, std::abs(std::arg(y(i, 0)) - std::arg(x(i, 0))));
    CHECK(std::abs(std::abs(y(i, 0)) - std::log1p(std::abs(x(i, 0)))) < 1e-12);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("log_scale gradient matches finite differences") {
  ComplexMatrix x = random_complex(6, 3);
  x(0, 0) = Complex(1e-3, -2e-3);
  const ComplexMatrix c = random_complex(6, 3);
  const ComplexMatrix analytic = log_scale_backward(x, c);
  const ComplexVector fd = fd_gradient([&] { return probe_loss(c, log_scale(x)); }, x.data(), x.size());
  CHECK(rel_err(ComplexVector(analytic.reshaped()), fd) < kLayerTol);
}

TEST_CASE("dense layer gradients match finite differences") {
  ComplexDense layer{random_complex(4, 6), random_complex(4)};
  ComplexMatrix x = random_complex(6, 3);
  const ComplexMatrix c = random_complex(4, 3);
  ComplexDense grad{ComplexMatrix::Zero(4, 6), ComplexVector::Zero(4)};
  const ComplexMatrix x_bar = layer.backward(x, c, grad);
  auto loss = [&] { return probe_loss(c, layer.forward(x)); };
  CHECK(rel_err(ComplexVector(x_bar.reshaped()), fd_gradient(loss, x.data(), x.size())) < kLayerTol);
  CHECK(rel_err(ComplexVector(grad.weight.reshaped()),
                fd_gradient(loss, layer.weight.data(), layer.weight.size())) < kLayerTol);
  CHECK(rel_err(grad.bias, fd_gradient(loss, layer.bias.data(), layer.bias.size())) < kLayerTol);
}

TEST_CASE("GRU") {
  SUBCASE("zero network keeps a zero state") {
    const int H = 4;
    ComplexGruLayer g{ComplexMatrix::Zero(3 * H, 5), ComplexMatrix::Zero(3 * H, H),
                      ComplexVector::Zero(3 * H)};
    const ComplexMatrix h = gru_step(g, random_complex(5, 3), ComplexMatrix::Zero(H, 3));
    for (Eigen::Index i = 0; i < h.size(); ++i) CHECK(h.data()[i] == Complex(0.0, 0.0));
  }

  SUBCASE("batched step matches the scalar reference") {
    const int H = 5, in = 3, C = 4;
    const ComplexGruLayer g = random_gru(in, H);
    const ComplexMatrix x = random_complex(in, C), h = random_complex(H, C);
    const ComplexMatrix out = gru_step(g, x, h);
    for (int c = 0; c < C; ++c) {
      std::vector<Complex> xc(x.col(c).begin(), x.col(c).end());
      std::vector<Complex> hc(h.col(c).begin(), h.col(c).end());
      MacCounter mac;
      const auto ref = reference_gru(g, xc, hc, mac);
      for (int i = 0; i < H; ++i) CHECK(std::abs(ref[i] - out(i, c)) < 1e-13);
    }
  }

  SUBCASE("gradients match finite differences") {
    const int H = 3, in = 4, C = 2;
    ComplexGruLayer g = random_gru(in, H);
    ComplexMatrix x = random_complex(in, C), h = random_complex(H, C);
    const ComplexMatrix c = random_complex(H, C);
    GruCache cache;
    gru_step(g, x, h, &cache);
    ComplexGruLayer grad{ComplexMatrix::Zero(3 * H, in), ComplexMatrix::Zero(3 * H, H),
                         ComplexVector::Zero(3 * H)};
    const auto [x_bar, h_bar] = gru_backward(g, cache, c, grad);
    auto loss = [&] { return probe_loss(c, gru_step(g, x, h)); };
    CHECK(rel_err(ComplexVector(x_bar.reshaped()), fd_gradient(loss, x.data(), x.size())) < kLayerTol);
    CHECK(rel_err(ComplexVector(h_bar.reshaped()), fd_gradient(loss, h.data(), h.size())) < kLayerTol);
    CHECK(rel_err(ComplexVector(grad.w_input.reshaped()),
                  fd_gradient(loss, g.w_input.data(), g.w_input.size())) < kLayerTol);
    CHECK(rel_err(ComplexVector(grad.w_hidden.reshaped()),
                  fd_gradient(loss, g.w_hidden.data(), g.w_hidden.size())) < kLayerTol);
    CHECK(rel_err(grad.bias, fd_gradient(loss, g.bias.data(), g.bias.size())) < kLayerTol);
  }

  SUBCASE("errors") {
    const ComplexGruLayer g = random_gru(3, 4);
    CHECK_THROWS_AS(gru_step(g, random_complex(2, 1), random_complex(4, 1)), InvalidArgument);
    ComplexMatrix h = random_complex(4, 1);
    h(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(gru_step(g, random_complex(3, 1), h), NumericError);
  }
}

TEST_CASE("structure parsing and validation") {
  CHECK(DependencyStructure::parse("banded", 4) == DependencyStructure::banded(4));
  CHECK(DependencyStructure::parse("diagonal", 7) == DependencyStructure::diagonal());
  CHECK_THROWS_AS(DependencyStructure::parse("toeplitz", 4), InvalidArgument);
  CHECK_THROWS_AS(DependencyStructure::banded(3), InvalidArgument);
  CHECK_THROWS_AS(DependencyStructure::block(1), InvalidArgument);
  CHECK_THROWS_AS(DependencyStructure::block(3).validate(16), InvalidArgument);
  CHECK(DependencyStructure::banded(4).label() == "banded-4");
}

TEST_CASE("group-count law over a (K, B) grid") {
  for (int K : {4, 8, 16, 32, 64}) {
    for (const auto& s : grid_structures(K)) {
      const int B = s.window();
      const int expected = s.kind() == StructureKind::Diagonal ? K
                           : s.kind() == StructureKind::Block  ? K / B
                                                               : 2 * K / B;
      CHECK(s.groups(K) == expected);
      const GroupSampler sampler{s, ComplexDense{random_complex(3, 5 * B), random_complex(3)},
                                 ComplexDense{random_complex(B, 3), random_complex(B)}};
      CHECK(downsample(sampler, random_complex(K, 5)).cols() == expected);
    }
  }
}

TEST_CASE("downsample shapes at K=8") {
  const int H = 6;
  auto shape = [&](const DependencyStructure& s) {
    const MetaParams p = init_params(s, H, 1);
    return downsample(p.sampler, random_complex(8, 5));
  };
  CHECK(shape(DependencyStructure::diagonal()).cols() == 8);
  CHECK(shape(DependencyStructure::block(2)).cols() == 4);
  CHECK(shape(DependencyStructure::banded(2)).cols() == 8);
  CHECK(shape(DependencyStructure::diagonal()).rows() == H);
}

TEST_CASE("banded windows overlap their neighbours by half a window") {
  for (int K : {8, 16, 32}) {
    for (int B : {2, 4, 8}) {
      if (B > K) continue;
      const auto s = DependencyStructure::banded(B);
      const int C = s.groups(K);
      for (int c = 0; c < C; ++c) {
        const auto a = window_bins(s, c, K);
        const auto b = window_bins(s, (c + 1) % C, K);
        int shared = 0;
        for (int k : a) shared += static_cast<int>(b.count(k));
        CHECK(shared == (C == 2 ? B : B / 2));
        CHECK(static_cast<int>(a.size()) == B);
      }
    }
  }
}

TEST_CASE("patch gather adjoint passes the dot-product test") {
  for (const auto& s : grid_structures(16)) {
    const ComplexMatrix xi = random_complex(16, 5);
    const ComplexMatrix pbar = random_complex(5 * s.window(), s.groups(16));
    const double lhs = probe_loss(pbar, group_patches(s, xi));
    const double rhs = probe_loss(group_patches_adjoint(s, pbar, 16), xi);
    CHECK(std::abs(lhs - rhs) < 1e-12 * std::abs(lhs));

    const ComplexVector dbar = random_complex(16);
    const ComplexMatrix local = random_complex(s.window(), s.groups(16));
    ComplexVector scattered = ComplexVector::Zero(16);
    for (int c = 0; c < s.groups(16); ++c)
      for (int j = 0; j < s.window(); ++j) scattered[s.bin(c, j, 16)] += local(j, c);
    const double lhs2 = probe_loss(dbar, scattered);
    const double rhs2 = probe_loss(scatter_adjoint(s, dbar, s.groups(16)), local);
    CHECK(std::abs(lhs2 - rhs2) < 1e-12 * std::abs(lhs2));
  }
}

TEST_CASE("sampler gradients match finite differences") {
  for (const auto& s : {DependencyStructure::diagonal(), DependencyStructure::block(4),
                        DependencyStructure::banded(4)}) {
    const int K = 16, H = 3;
    MetaParams p = init_params(s, H, 5);
    p.sampler.down.bias = random_complex(H);
    p.sampler.up.bias = random_complex(s.window());
    ComplexMatrix xi = random_complex(K, 5);
    const ComplexMatrix c_down = random_complex(H, s.groups(K));

    ComplexDense g_down{ComplexMatrix::Zero(H, 5 * s.window()), ComplexVector::Zero(H)};
    const ComplexMatrix patches = group_patches(s, xi);
    const ComplexMatrix patches_bar = p.sampler.down.backward(patches, c_down, g_down);
    const ComplexMatrix xi_bar = group_patches_adjoint(s, patches_bar, K);
    auto down_loss = [&] { return probe_loss(c_down, downsample(p.sampler, xi)); };
    CHECK(rel_err(ComplexVector(xi_bar.reshaped()), fd_gradient(down_loss, xi.data(), xi.size())) <
          kLayerTol);
    CHECK(rel_err(ComplexVector(g_down.weight.reshaped()),
                  fd_gradient(down_loss, p.sampler.down.weight.data(), p.sampler.down.weight.size())) <
          kLayerTol);
    CHECK(rel_err(g_down.bias, fd_gradient(down_loss, p.sampler.down.bias.data(), H)) < kLayerTol);

    ComplexMatrix G = random_complex(H, s.groups(K));
    const ComplexVector c_up = random_complex(K);
    ComplexDense g_up{ComplexMatrix::Zero(s.window(), H), ComplexVector::Zero(s.window())};
    const ComplexMatrix G_bar =
        p.sampler.up.backward(G, scatter_adjoint(s, c_up, s.groups(K)), g_up);
    auto up_loss = [&] { return probe_loss(c_up, upsample(p.sampler, G, K)); };
    CHECK(rel_err(ComplexVector(G_bar.reshaped()), fd_gradient(up_loss, G.data(), G.size())) <
          kLayerTol);
    CHECK(rel_err(ComplexVector(g_up.weight.reshaped()),
                  fd_gradient(up_loss, p.sampler.up.weight.data(), p.sampler.up.weight.size())) <
          kLayerTol);
    CHECK(rel_err(g_up.bias, fd_gradient(up_loss, p.sampler.up.bias.data(), s.window())) <
          kLayerTol);
  }
}

TEST_CASE("receptive field of the down-sampler") {
  for (int K : {8, 16, 32}) {
    for (const auto& s : grid_structures(K)) {
      const MetaParams p = init_params(s, 3, 9);
      const ComplexMatrix xi = random_complex(K, 5);
      const ComplexMatrix base = downsample(p.sampler, xi);
      for (int k = 0; k < K; ++k) {
        ComplexMatrix bumped = xi;
        bumped(k, 2) += Complex(0.5, -0.25);
        const ComplexMatrix diff = downsample(p.sampler, bumped) - base;
        for (int c = 0; c < s.groups(K); ++c) {
          const bool touched = diff.col(c).norm() > 0.0;
          CHECK(touched == (window_bins(s, c, K).count(k) == 1));
        }
      }
    }
  }
}

TEST_CASE("up-sampler adjacency") {
  auto adjacency = [](const DependencyStructure& s, int K) {
    const MetaParams p = init_params(s, 3, 4);
    const int C = s.groups(K);
    Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(K, C);
    const ComplexMatrix G = random_complex(3, C);
    const ComplexVector base = upsample(p.sampler, G, K);
    for (int c = 0; c < C; ++c) {
      ComplexMatrix bumped = G;
      bumped.col(c) += random_complex(3);
      const ComplexVector diff = upsample(p.sampler, bumped, K) - base;
      for (int k = 0; k < K; ++k) adj(k, c) = std::abs(diff[k]) > 0.0 ? 1 : 0;
    }
    return adj;
  };

  SUBCASE("zero input and zero bias give zero output") {
    const MetaParams p = init_params(DependencyStructure::banded(4), 3, 4);
    CHECK(upsample(p.sampler, ComplexMatrix::Zero(3, 8), 16).norm() == 0.0);
  }
  SUBCASE("diagonal is the identity pattern") {
    CHECK(adjacency(DependencyStructure::diagonal(), 16) == Eigen::MatrixXi::Identity(16, 16));
  }
  SUBCASE("block is block diagonal") {
    const auto adj = adjacency(DependencyStructure::block(4), 16);
    for (int k = 0; k < 16; ++k)
      for (int c = 0; c < 4; ++c) CHECK(adj(k, c) == (k / 4 == c ? 1 : 0));
  }
  SUBCASE("banded follows the circular windows") {
    const auto s = DependencyStructure::banded(4);
    const auto adj = adjacency(s, 16);
    for (int k = 0; k < 16; ++k) {
      CHECK(adj.row(k).sum() == 2);
      for (int c = 0; c < 8; ++c) CHECK(adj(k, c) == static_cast<int>(window_bins(s, c, 16).count(k)));
    }
  }
  SUBCASE("shape mismatch") {
    const MetaParams p = init_params(DependencyStructure::block(4), 3, 4);
    CHECK_THROWS_AS(upsample(p.sampler, ComplexMatrix::Zero(3, 5), 16), InvalidArgument);
  }
}

TEST_CASE("diagonal samplers are shift-equivariant along frequency") {
  const MetaParams p = init_params(DependencyStructure::diagonal(), 4, 3);
  const ComplexMatrix xi = random_complex(16, 5);
  ComplexMatrix shifted(16, 5);
  for (int k = 0; k < 16; ++k) shifted.row((k + 3) % 16) = xi.row(k);
  const ComplexMatrix a = downsample(p.sampler, xi);
  const ComplexMatrix b = downsample(p.sampler, shifted);
  for (int k = 0; k < 16; ++k) CHECK((a.col(k) - b.col((k + 3) % 16)).norm() < 1e-14);
  const ComplexVector ua = upsample(p.sampler, a, 16);
  const ComplexVector ub = upsample(p.sampler, b, 16);
  for (int k = 0; k < 16; ++k) CHECK(std::abs(ua[k] - ub[(k + 3) % 16]) < 1e-14);
}

TEST_CASE("parameter initialisation") {
  SUBCASE("deterministic for a fixed seed") {
    const auto s = DependencyStructure::banded(4);
    MetaParams a = init_params(s, 8, 42), b = init_params(s, 8, 42), c = init_params(s, 8, 43);
    const auto ta = tensors(a), tb = tensors(b), tc = tensors(c);
    REQUIRE(ta.size() == tb.size());
    bool differs = false;
    for (size_t i = 0; i < ta.size(); ++i) {
      CHECK(std::memcmp(ta[i].data, tb[i].data, ta[i].size() * sizeof(Complex)) == 0);
      differs |= std::memcmp(ta[i].data, tc[i].data, ta[i].size() * sizeof(Complex)) != 0;
    }
    CHECK(differs);
  }

  SUBCASE("parameter count matches a shape audit") {
    for (int H : {4, 16, 32}) {
      for (const auto& s : {DependencyStructure::diagonal(), DependencyStructure::block(4),
                            DependencyStructure::banded(8)}) {
        const long long B = s.window();
        const long long audit = (5 * B * H + H) + 2 * (3LL * H * H + 3LL * H * H + 3 * H) + (B * H + B);
        const MetaParams p = init_params(s, H, 1);
        CHECK(p.parameter_count() == audit);
        long long summed = 0;
        for (const auto& t : tensors(p)) summed += t.size();
        CHECK(summed == audit);
      }
    }
    const long long diag32 = init_params(DependencyStructure::diagonal(), 32, 1).parameter_count();
    CHECK(diag32 == 12705);
    CHECK(std::abs(diag32 - 14000.0) <= 0.1 * 14000.0);
  }

  SUBCASE("empirical variance follows the Glorot target") {
    const int H = 64;
    const MetaParams p = init_params(DependencyStructure::block(4), H, 11);
    auto check_var = [](const ComplexMatrix& m, double target) {
      const double var = m.cwiseAbs2().mean();
      CHECK(std::abs(var / target - 1.0) < 0.2);
      const double re = m.real().array().square().mean();
      CHECK(std::abs(re / (target / 2) - 1.0) < 0.2);
    };
    check_var(p.gru[0].w_hidden, 1.0 / (2 * H));
    check_var(p.gru[1].w_input, 1.0 / (2 * H));
    check_var(p.sampler.down.weight, 1.0 / (20 + H));
    check_var(p.sampler.up.weight, 1.0 / (H + 4));
    CHECK(p.gru[0].bias.norm() == 0.0);
  }
}
