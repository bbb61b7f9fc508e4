#include <cmath>
#include <limits>

#include "doctest.h"
#include "hoaf/dsp.hpp"
#include "hoaf/errors.hpp"
#include "support/oracles.hpp"

using namespace hoaf;
using namespace hoaf::testing;

namespace {

// Streams `u` through ols_apply hop by hop.
RealVector stream_ols(const OlsConfig& cfg, const FilterWeights& w, const RealVector& u) {
  OlsInputBuffer buf(cfg);
  const int R = cfg.hop_size;
  RealVector y(u.size());
  for (Eigen::Index start = 0; start + R <= u.size(); start += R) {
    const auto& frame = buf.push({u.data() + start, static_cast<size_t>(R)});
    y.segment(start, R) = ols_apply(cfg, w, frame).y_time;
  }
  return y;
}

// Loss ||d - y||^2 for the current hop.
double hop_loss(const OlsConfig& cfg, const FilterWeights& w, const TimeFrame& u_frame,
                const TimeFrame& d) {
  return (d - ols_apply(cfg, w, u_frame).y_time).squaredNorm();
}

}  // namespace

TEST_CASE("dft of an impulse is all ones") {
  ComplexVector x = ComplexVector::Zero(8);
  x[0] = 1.0;
  const ComplexVector X = dft(x);
  for (int k = 0; k < 8; ++k) CHECK(std::abs(X[k] - Complex(1.0, 0.0)) < 1e-15);
}

TEST_CASE("idft inverts dft") {
  const ComplexVector x = random_complex(16);
  CHECK(rel_err(idft(dft(x)), x) < 1e-12);
}

TEST_CASE("dft matches the dense DFT matrix") {
  const ComplexVector x = random_complex(32);
  CHECK(rel_err(dft(x), ComplexVector(dft_matrix(32) * x)) < 1e-10);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(OlsConfig::with_fft_size(6), InvalidArgument);
  CHECK_THROWS_AS(OlsConfig::with_fft_size(2), InvalidArgument);
  OlsConfig bad{16, 4, 16000.0};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  const OlsConfig full = OlsConfig::with_fft_size(4096);
  CHECK(full.hop_size == 2048);
}

TEST_CASE("ols_apply basic filters") {
  const OlsConfig cfg = OlsConfig::with_fft_size(16);
  const RealVector frame = random_real(16);

  SUBCASE("identity filter passes the current hop through") {
    RealVector delta = RealVector::Zero(1);
    delta[0] = 1.0;
    const auto out = ols_apply(cfg, weights_from_taps(delta, cfg), frame);
    CHECK(rel_err(out.y_time, RealVector(frame.tail(8))) < 1e-14);
  }
  SUBCASE("zero filter gives silence") {
    const auto out = ols_apply(cfg, FilterWeights::zeros(16), frame);
    CHECK(out.y_time.norm() == 0.0);
  }
  SUBCASE("size and finiteness errors") {
    CHECK_THROWS_AS(ols_apply(cfg, FilterWeights::zeros(8), frame), InvalidArgument);
    CHECK_THROWS_AS(ols_apply(cfg, FilterWeights::zeros(16), RealVector::Zero(8)), InvalidArgument);
    RealVector nan_frame = frame;
    nan_frame[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ols_apply(cfg, FilterWeights::zeros(16), nan_frame), NumericError);
  }
}

TEST_CASE("full-scale frame sizes are accepted") {
  const OlsConfig cfg = OlsConfig::with_fft_size(4096);
  const auto out = ols_apply(cfg, FilterWeights::zeros(4096), random_real(4096));
  CHECK(out.y_time.size() == 2048);
}

TEST_CASE("streaming ols equals direct linear convolution") {
  for (int K : {16, 64}) {
    const OlsConfig cfg = OlsConfig::with_fft_size(K);
    for (int trial = 0; trial < 10; ++trial) {
      const RealVector taps = random_real(cfg.filter_taps());
      const RealVector u = random_real(K * 8);
      const RealVector y = stream_ols(cfg, weights_from_taps(taps, cfg), u);
      RealVector direct = RealVector::Zero(u.size());
      for (Eigen::Index n = 0; n < u.size(); ++n)
        for (Eigen::Index m = 0; m < taps.size() && m <= n; ++m) direct[n] += taps[m] * u[n - m];
      CHECK(rel_err(y, direct) < 1e-8);
    }
  }
}

TEST_CASE("filter projection matches the dense anti-aliasing matrix and is idempotent") {
  const OlsConfig cfg = OlsConfig::with_fft_size(16);
  const ComplexVector w = random_complex(16);
  const ComplexMatrix Zw = filter_projection_matrix(16, 8);
  const ComplexVector once = project_filter(w, cfg);
  CHECK(rel_err(once, ComplexVector(Zw * w)) < 1e-12);
  CHECK(rel_err(project_filter(once, cfg), once) < 1e-13);
}

TEST_CASE("real output for conjugate-symmetric filters") {
  const OlsConfig cfg = OlsConfig::with_fft_size(32);
  const auto w = weights_from_taps(random_real(16), cfg);
  const auto out = ols_apply(cfg, w, random_real(32));
  CHECK(out.imag_residual < 1e-10 * out.y_time.norm());
}

TEST_CASE("af_error") {
  const OlsConfig cfg = OlsConfig::with_fft_size(16);
  const RealVector y = random_real(8);
  CHECK(af_error(y, y, cfg).e_time.norm() == 0.0);
  const RealVector ones = af_error(RealVector(y.array() + 1.0), y, cfg).e_time;
  CHECK((ones.array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(af_error(RealVector::Zero(8), RealVector::Zero(7), cfg), InvalidArgument);

  SUBCASE("frequency-domain error equals the transposed trim embedding") {
    const RealVector d = random_real(8);
    const ErrorFrame err = af_error(d, y, cfg);
    // F Tbar^T e: Tbar^T places e in the last R slots.
    ComplexMatrix TbarT = ComplexMatrix::Zero(16, 8);
    for (int i = 0; i < 8; ++i) TbarT(8 + i, i) = 1.0;
    const ComplexVector expected = dft_matrix(16) * TbarT * err.e_time.cast<Complex>();
    CHECK(rel_err(err.e_freq, expected) < 1e-12);
  }
}

TEST_CASE("filter_gradient") {
  SUBCASE("zero error gives zero gradient") {
    const OlsConfig cfg = OlsConfig::with_fft_size(16);
    const ComplexVector g = filter_gradient(dft(random_real(16)), RealVector::Zero(8), cfg);
    CHECK(g.norm() == 0.0);
  }

  SUBCASE("matches the dense matrix form") {
    const OlsConfig cfg = OlsConfig::with_fft_size(16);
    const SpectrumFrame U = dft(random_real(16));
    const RealVector e = random_real(8);
    const ComplexMatrix A =
        output_trim_matrix(16, 8) * U.asDiagonal() * filter_projection_matrix(16, 8);
    const ComplexVector expected = -(A.adjoint() * e.cast<Complex>());
    CHECK(rel_err(filter_gradient(U, e, cfg), expected) < 1e-12);
  }

  SUBCASE("matches central finite differences") {
    int checked = 0;
    for (int K : {8, 16, 32}) {
      const OlsConfig cfg = OlsConfig::with_fft_size(K);
      const int instances = K == 32 ? 34 : 33;
      for (int trial = 0; trial < instances; ++trial) {
        const RealVector frame = random_real(K);
        const RealVector d = random_real(K / 2);
        // Unconstrained complex weights exercise the real-part synthesis too.
        FilterWeights w{random_complex(K)};
        const OlsOutput y = ols_apply(cfg, w, frame);
        const ComplexVector g = filter_gradient(dft(frame), d - y.y_time, cfg);
        ComplexVector fd(K);
        for (int k = 0; k < K; ++k)
          fd[k] = 0.5 * central_difference([&] { return hop_loss(cfg, w, frame, d); }, w.w[k], 1e-5);
        CHECK(rel_err(g, fd) < 1e-5);
        ++checked;
      }
    }
    CHECK(checked == 100);
  }

  SUBCASE("invariant to the discarded time-domain taps") {
    const OlsConfig cfg = OlsConfig::with_fft_size(16);
    const RealVector frame = random_real(16);
    const RealVector d = random_real(8);
    const FilterWeights w{random_complex(16)};
    ComplexVector tail = ComplexVector::Zero(16);
    tail.tail(8) = random_complex(8);
    const FilterWeights w2{w.w + dft(tail)};
    const SpectrumFrame U = dft(frame);
    const ComplexVector g1 = filter_gradient(U, d - ols_apply(cfg, w, frame).y_time, cfg);
    const ComplexVector g2 = filter_gradient(U, d - ols_apply(cfg, w2, frame).y_time, cfg);
    CHECK(rel_err(g1, g2) < 1e-12);
  }
}

TEST_CASE("filtering adjoints pass the dot-product test") {
  const OlsConfig cfg = OlsConfig::with_fft_size(16);
  const SpectrumFrame U = dft(random_real(16));
  const ComplexVector dw = random_complex(16);
  const RealVector yt_bar = random_real(8);
  const ComplexVector yf_bar = random_complex(16);
  const OlsOutput out = ols_apply_freq(cfg, FilterWeights{dw}, U);
  // <J dw, bar> in the real inner product equals <dw, J^T bar>.
  const double lhs = yt_bar.dot(out.y_time) + (yf_bar.conjugate().cwiseProduct(out.y_freq)).sum().real();
  const ComplexVector w_bar = ols_adjoint(U, yt_bar, yf_bar, cfg);
  const double rhs = (w_bar.conjugate().cwiseProduct(dw)).sum().real();
  CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));

  const RealVector e = random_real(8);
  const ComplexVector E_bar = random_complex(16);
  const double lhs2 = (E_bar.conjugate().cwiseProduct(pad_and_transform(e, cfg))).sum().real();
  const double rhs2 = pad_and_transform_adjoint(E_bar, cfg).dot(e);
  CHECK(std::abs(lhs2 - rhs2) < 1e-10 * std::abs(lhs2));
}

TEST_CASE("misalignment of the true filter is tiny") {
  const OlsConfig cfg = OlsConfig::with_fft_size(32);
  const RealVector taps = random_real(16);
  CHECK(misalignment_db(weights_from_taps(taps, cfg), taps, cfg) < -250.0);
  CHECK(std::abs(misalignment_db(FilterWeights::zeros(32), taps, cfg)) < 1e-12);
}
