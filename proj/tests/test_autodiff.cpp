#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spectt/autodiff.hpp"
#include "spectt/fit.hpp"

using namespace spectt;

namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d / std::max(1.0, max_abs(a));
}

Matrix unit_target(std::size_t m, std::size_t n, std::uint64_t seed) {
  return normalize_spectral(random_normal(m, n, seed));
}

}  // namespace

TEST(FrameTape, ValueIsBitwiseDecode) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HouseholderLayout l(9, 4, seed % 2 ? LayoutVariant::Full : LayoutVariant::Reduced);
    oracle::randomize(l, seed);
    const FrameTape t(l);
    EXPECT_EQ(t.value(), decode(l));
  }
}

TEST(FrameTape, FrameNormGradientVanishes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HouseholderLayout l(10, 3, LayoutVariant::Full);
    oracle::randomize(l, seed);
    const FrameTape t(l);
    const Matrix qbar = 2.0 * t.value();
    EXPECT_LE(max_abs(t.vjp(qbar)), 1e-6);
  }
}

TEST(FrameTape, InnerProductMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HouseholderLayout l(8, 3, seed % 2 ? LayoutVariant::Full : LayoutVariant::Reduced);
    oracle::randomize(l, seed);
    const Matrix g = random_normal(8, 3, seed + 50);
    const FrameTape t(l);
    const std::vector<double> grad = t.vjp(g);
    std::vector<double> theta(l.params().begin(), l.params().end());
    const auto f = [&](std::span<const double> x) {
      HouseholderLayout c = l;
      std::copy(x.begin(), x.end(), c.params().begin());
      return dot(g.data(), decode(c).data());
    };
    EXPECT_LE(max_rel_diff(grad, fd_grad(f, theta)), 1e-6);
  }
}

TEST(FrameTape, LinearInUpstream) {
  HouseholderLayout l(7, 3, LayoutVariant::Full);
  oracle::randomize(l, 4);
  const FrameTape t(l);
  const Matrix a = random_normal(7, 3, 1), b = random_normal(7, 3, 2);
  const auto ga = t.vjp(a), gb = t.vjp(b), gab = t.vjp(2.0 * a + -3.0 * b);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(gab[i], 2 * ga[i] - 3 * gb[i], 1e-12);
}

TEST(FrameTape, ShapeError) {
  const FrameTape t(HouseholderLayout(5, 2, LayoutVariant::Full));
  EXPECT_THROW(t.vjp(Matrix(5, 3)), ShapeError);
}

TEST(ChainTape, MatchesFiniteDifferences) {
  std::vector<TTCore> cores;
  const Dims n{2, 3, 2}, R{1, 2, 3, 2};
  for (std::size_t k = 0; k < 3; ++k)
    cores.emplace_back(Tensor({R[k], n[k], R[k + 1]}, random_normal(1, R[k] * n[k] * R[k + 1], k).values()));
  const ChainTape t(cores);
  EXPECT_EQ(t.value(), chain_matrix(cores));
  const Matrix g = random_normal(12, 2, 99);
  const auto grads = t.vjp(g);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto f = [&](std::span<const double> x) {
      auto c = cores;
      std::copy(x.begin(), x.end(), c[k].data.values().begin());
      return dot(g.data(), chain_matrix(c).data());
    };
    const auto fd = fd_grad(f, cores[k].data.values());
    EXPECT_LE(max_rel_diff(grads[k].values(), fd), 1e-8);
  }
  EXPECT_THROW(t.vjp(Matrix(3, 3)), ShapeError);
}

TEST(NormalizeVjp, MatchesFiniteDifferences) {
  SpectrumParams sp = SpectrumParams::learned_ones(4);
  sp.s = {0.3, -1.7, 0.9, 1.1};
  sp.signs = {1, -1, 1, 1};
  const std::vector<double> sbar{0.5, -2.0, 1.5, 0.25};
  const auto g = normalize_vjp(sp, sbar);
  const auto f = [&](std::span<const double> x) {
    SpectrumParams c = sp;
    c.s.assign(x.begin(), x.end());
    return dot(sbar, materialize_sigma(c));
  };
  EXPECT_LE(max_rel_diff(g, fd_grad(f, sp.s)), 1e-9);
}

TEST(NormalizeVjp, TieGoesToSmallestIndex) {
  SpectrumParams sp = SpectrumParams::learned_ones(3);
  sp.s = {2.0, -2.0, 1.0};
  const auto g = normalize_vjp(sp, std::vector<double>{1, 1, 1});
  // Only index 0 carries the normalizer term: g_0 = 1/2 − (2 − 2 + 1)/4.
  EXPECT_DOUBLE_EQ(g[0], 0.5 - 0.25);
  EXPECT_DOUBLE_EQ(g[1], 0.5);
  EXPECT_DOUBLE_EQ(g[2], 0.5);
  sp.s = {0, 0, 0};
  EXPECT_THROW(normalize_vjp(sp, std::vector<double>{1, 1, 1}), DomainError);
}

TEST(PenaltyGrad, MatchesClosedForm) {
  const std::vector<double> sigma{0.5, -0.25, 1.0};
  std::vector<double> sb(3, 0.0);
  const double v = penalty_value_grad(sigma, 0.1, sb);
  EXPECT_NEAR(v, 0.1 * (std::log(2.0) + std::log(4.0)), 1e-15);
  EXPECT_DOUBLE_EQ(sb[0], -0.1 / 0.5);
  EXPECT_DOUBLE_EQ(sb[1], 0.1 / 0.25);
  EXPECT_DOUBLE_EQ(sb[2], -0.1);
}

TEST(PenaltyGrad, ThroughNormalizationMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SvdpParams p = make_svdp(6, 5, 3, SpectrumMode::LearnedRegularized, InitScheme::identity(), 0, 1.0);
    oracle::randomize(p, seed);
    const LossSpec none{};
    const ValueGrad vg = value_and_grad(p, none);
    const auto f = [&](std::span<const double> x) {
      SvdpParams c = p;
      c.assign(x);
      return loss_value(c, none);
    };
    EXPECT_LE(max_rel_diff(vg.grad, fd_grad(f, p.flat())), 1e-6);
    EXPECT_NEAR(vg.value, d_optimal_penalty(materialize_sigma(p.spectrum)), 1e-12);
  }
}

TEST(FdGrad, ExactOnQuadraticAndLinear) {
  // O(1) probe point.
  const std::vector<double> theta{0.3, -0.2, 0.5};
  const auto quad = [](std::span<const double> x) { return x[0] * x[0] + 3 * x[1] * x[2] - x[2] * x[2]; };
  const auto g = fd_grad(quad, theta);
  EXPECT_NEAR(g[0], 0.6, 1e-9);
  EXPECT_NEAR(g[1], 1.5, 1e-9);
  EXPECT_NEAR(g[2], -0.6 - 1.0, 1e-9);
  const auto lin = [](std::span<const double> x) { return 2 * x[0] - x[1] + 0.5 * x[2]; };
  const auto h = fd_grad(lin, theta);
  EXPECT_NEAR(h[0], 2.0, 1e-10);
  EXPECT_NEAR(h[1], -1.0, 1e-10);
  EXPECT_NEAR(h[2], 0.5, 1e-10);
}

TEST(FdGrad, NonFiniteNamesCoordinate) {
  const auto f = [](std::span<const double> x) { return x[1] > 0.5 ? std::nan("") : x[0]; };
  try {
    fd_grad(f, std::vector<double>{0.0, 0.5});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
}

TEST(Tapes, WeightMatchesAssemble) {
  SvdpParams p = make_svdp(8, 6, 3, SpectrumMode::Learned, InitScheme::identity(), 0);
  oracle::randomize(p, 3);
  EXPECT_LE(oracle::max_abs_diff(SvdpTape(p).w(), assemble(p)), 1e-15);
  SttpParams q = make_sttp(16, 72, 4, SpectrumMode::Learned, InitScheme::identity(), 0);
  oracle::randomize(q, 3);
  EXPECT_LE(oracle::max_abs_diff(SttpTape(q).w(), assemble_sttp(q)), 1e-14);
  // Replaying the forward pass is deterministic.
  EXPECT_EQ(SttpTape(q).w(), SttpTape(q).w());
}

TEST(Tapes, ShapeErrors) {
  const SvdpTape t(make_svdp(8, 6, 3, SpectrumMode::Learned, InitScheme::identity(), 0));
  EXPECT_THROW(t.vjp(Matrix(6, 8)), ShapeError);
  EXPECT_THROW(t.vjp(Matrix(8, 6), std::vector<double>(2)), ShapeError);
  const SttpTape s(make_sttp(4, 6, 2, SpectrumMode::Learned, InitScheme::identity(), 0));
  EXPECT_THROW(s.vjp(Matrix(4, 5)), ShapeError);
}

TEST(Tapes, VjpIsLinear) {
  SttpParams q = make_sttp(12, 18, 3, SpectrumMode::Learned, InitScheme::identity(), 0);
  oracle::randomize(q, 5);
  const SttpTape t(q);
  const Matrix a = random_normal(12, 18, 1), b = random_normal(12, 18, 2);
  const auto ga = t.vjp(a), gb = t.vjp(b), gab = t.vjp(a + b);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(gab[i], ga[i] + gb[i], 1e-12);
}

TEST(Gradcheck, SvdpAllModes) {
  for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned, SpectrumMode::LearnedRegularized})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SvdpParams p = make_svdp(8, 6, 3, mode, InitScheme::identity(), 0, 0.1);
      oracle::randomize(p, seed);
      const GradcheckReport rep = gradcheck(p, LossSpec::frobenius(unit_target(8, 6, seed)));
      EXPECT_TRUE(rep.passed) << to_string(mode) << " seed " << seed << " err " << rep.max_rel_error;
      EXPECT_EQ(rep.grad_size, svdp_dof(8, 6, 3, mode));
    }
}

TEST(Gradcheck, SttpAllModes) {
  for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned, SpectrumMode::LearnedRegularized})
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      SttpParams p = make_sttp(16, 72, 4, mode, InitScheme::identity(), 0, 0.1);
      oracle::randomize(p, seed);
      const GradcheckReport rep = gradcheck(p, LossSpec::frobenius(unit_target(16, 72, seed)));
      EXPECT_TRUE(rep.passed) << to_string(mode) << " seed " << seed << " err " << rep.max_rel_error;
      EXPECT_EQ(rep.grad_size, sttp_dof(16, 72, 4, mode));
    }
}

TEST(Gradcheck, InnerProductLoss) {
  SvdpParams p = make_svdp(7, 9, 4, SpectrumMode::Learned, InitScheme::identity(), 0);
  oracle::randomize(p, 12);
  EXPECT_TRUE(gradcheck(p, LossSpec::inner(random_normal(7, 9, 1))).passed);
}

TEST(Gradcheck, SkipsTies) {
  SvdpParams p = make_svdp(6, 5, 3, SpectrumMode::Learned, InitScheme::identity(), 0);
  p.spectrum.s = {1.0, -1.0, 0.5};
  const GradcheckReport rep = gradcheck(p, LossSpec::frobenius(unit_target(6, 5, 0)));
  EXPECT_TRUE(rep.skipped_tie);
  EXPECT_EQ(rep.grad_size, p.dof());
}

TEST(Gradcheck, DetectsWrongGradient) {
  // A loss whose value is evaluated at different params than the gradient
  // must fail: compare against a shifted target by perturbing one cell.
  SvdpParams p = make_svdp(6, 5, 2, SpectrumMode::Learned, InitScheme::identity(), 0);
  oracle::randomize(p, 1);
  const LossSpec loss = LossSpec::frobenius(unit_target(6, 5, 3));
  ValueGrad vg = value_and_grad(p, loss);
  const auto f = [&](std::span<const double> x) {
    SvdpParams c = p;
    c.assign(x);
    return loss_value(c, loss);
  };
  const auto fd = fd_grad(f, p.flat());
  vg.grad[0] += 1e-3;
  EXPECT_GT(max_rel_diff(vg.grad, fd), 1e-6);
}
