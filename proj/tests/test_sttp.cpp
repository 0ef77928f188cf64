#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "spectt/sttp.hpp"

using namespace spectt;

namespace {

using Multiset = std::map<std::pair<std::size_t, std::size_t>, int>;

Multiset size_multiset(const std::vector<CoreSpec>& specs) {
  Multiset m;
  for (const auto& s : specs) ++m[{s.rows, s.cols}];
  return m;
}

SttpParams random_sttp(std::size_t dout, std::size_t din, std::size_t r, SpectrumMode mode,
                       std::uint64_t seed) {
  SttpParams p = make_sttp(dout, din, r, mode, InitScheme::identity(), 0);
  oracle::randomize(p, seed);
  return p;
}

}  // namespace

TEST(Factorize, Examples) {
  EXPECT_EQ(factorize(72).factors, (Dims{2, 2, 2, 3, 3}));
  EXPECT_EQ(factorize(17).factors, (Dims{17}));
  EXPECT_EQ(factorize(16).factors, (Dims{2, 2, 2, 2}));
  EXPECT_THROW(factorize(1), DomainError);
  EXPECT_THROW(factorize(0), DomainError);
}

TEST(Factorize, MatchesTrialDivision) {
  for (std::size_t d = 2; d <= 500; ++d) {
    const Dims f = factorize(d).factors;
    EXPECT_EQ(f, Dims(oracle::prime_factors(d)));
    EXPECT_EQ(product(f), d);
    EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
  }
}

TEST(CoreSizeSchedule, WorkedExample) {
  const auto specs = core_size_schedule(make_sttp_shape(16, 72, 4, SpectrumMode::Learned));
  const Multiset want{{{2, 2}, 2}, {{4, 4}, 2}, {{8, 4}, 3}, {{12, 4}, 2}};
  EXPECT_EQ(size_multiset(specs), want);
}

TEST(CoreSizeSchedule, SmallInstance) {
  const auto specs = core_size_schedule(make_sttp_shape(4, 4, 2, SpectrumMode::Learned));
  ASSERT_EQ(specs.size(), 4u);
  EXPECT_EQ(specs[0], (CoreSpec{2, 2, LayoutVariant::Reduced, false}));
  EXPECT_EQ(specs[1], (CoreSpec{4, 2, LayoutVariant::Full, false}));
  EXPECT_EQ(specs[2], (CoreSpec{4, 2, LayoutVariant::Full, true}));
  EXPECT_EQ(specs[3], (CoreSpec{2, 2, LayoutVariant::Reduced, true}));
  const auto id = core_size_schedule(make_sttp_shape(4, 4, 2, SpectrumMode::Identity));
  EXPECT_EQ(id[1].variant, LayoutVariant::Reduced);
  EXPECT_EQ(id[2].variant, LayoutVariant::Full);
}

TEST(CoreSizeSchedule, SaturatedRanksEqualCaps) {
  const SttpShape s = make_sttp_shape(12, 8, 8, SpectrumMode::Learned);
  const Dims caps = rank_caps(s.schedule.n);
  for (std::size_t k = 1; k + 1 < caps.size(); ++k) EXPECT_EQ(s.schedule.ranks[k], std::min<std::size_t>(8, caps[k]));
}

TEST(SttpDof, Examples) {
  EXPECT_EQ(sttp_dof(16, 72, 4, SpectrumMode::Learned), 128u);
  EXPECT_EQ(svdp_dof(16, 72, 4, SpectrumMode::Learned), 336u);
  EXPECT_THROW(sttp_dof(16, 72, 17, SpectrumMode::Learned), DomainError);
}

TEST(SttpDof, PositiveAndGaugeTermsFor16x72) {
  const SttpShape s = make_sttp_shape(16, 72, 4, SpectrumMode::Learned);
  std::size_t pos = 0, neg = 0;
  for (std::size_t k = 0; k < s.schedule.n.size(); ++k)
    pos += s.schedule.ranks[k] * s.schedule.n[k] * s.schedule.ranks[k + 1];
  for (std::size_t k = 1; k + 1 < s.schedule.ranks.size(); ++k) neg += s.schedule.ranks[k] * s.schedule.ranks[k];
  EXPECT_EQ(pos, 232u);
  EXPECT_EQ(neg, 104u);
}

TEST(SttpDof, MatchesFreeCellCount) {
  for (std::size_t dout = 2; dout <= 64; ++dout)
    for (std::size_t din = 2; din <= 64; din += 1 + dout % 3)
      for (std::size_t r = 1; r <= std::min<std::size_t>({8, dout, din}); ++r)
        for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned}) {
          const SttpShape s = make_sttp_shape(dout, din, r, mode);
          std::size_t cells = mode == SpectrumMode::Identity ? 0 : r;
          for (const auto& c : core_size_schedule(s))
            cells += oracle::count_free_cells(c.rows, c.cols, c.variant == LayoutVariant::Reduced);
          ASSERT_EQ(sttp_dof(s), cells) << dout << "x" << din << " r=" << r;
        }
}

TEST(SttpDof, SingleFactorChainsEqualSvdp) {
  for (std::size_t a : {2u, 3u, 5u, 7u, 13u})
    for (std::size_t b : {2u, 3u, 11u, 17u})
      for (std::size_t r = 1; r <= std::min(a, b); ++r)
        for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned})
          EXPECT_EQ(sttp_dof(a, b, r, mode), svdp_dof(a, b, r, mode));
}

TEST(SttpDof, GrowsSlowlyWithDimension) {
  std::size_t prev = sttp_dof(8, 8, 4, SpectrumMode::Learned);
  for (std::size_t d = 16; d <= 1024; d *= 2) {
    const std::size_t cur = sttp_dof(d, d, 4, SpectrumMode::Learned);
    EXPECT_LE(cur - prev, 2 * (2 * 16 + 16));
    prev = cur;
  }
}

TEST(MakeSttp, ParamsMatchSchedule) {
  const SttpParams p = make_sttp(16, 72, 4, SpectrumMode::Learned, InitScheme::noisy_identity(), 3);
  EXPECT_NO_THROW(validate(p));
  EXPECT_EQ(p.dof(), 128u);
  EXPECT_EQ(p.flat().size(), 128u);
}

TEST(AssembleSttp, IdentitySpectrumGivesUnitSingularValues) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SttpParams p = random_sttp(16, 72, 4, SpectrumMode::Identity, seed);
    const Svd s = svd_full(assemble_sttp(p));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.sigma[i], 1.0, 1e-10);
    EXPECT_LE(s.sigma[4], 1e-10);
  }
}

TEST(AssembleSttp, SingularValuesAreSigmaMagnitudes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SttpParams p = random_sttp(12, 18, 3, SpectrumMode::Learned, seed);
    const Svd s = svd_full(assemble_sttp(p));
    auto want = materialize_sigma(p.spectrum);
    for (double& v : want) v = std::abs(v);
    std::sort(want.begin(), want.end(), std::greater<>());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.sigma[i], want[i], 1e-9);
    EXPECT_LE(s.sigma[3], 1e-10);
  }
}

TEST(AssembleSttp, MatchesBruteForceChain) {
  for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned}) {
    const SttpParams p = random_sttp(4, 6, 2, mode, 31);
    const auto frames = decode_cores(p);
    const Dims& n = p.shape.schedule.n;
    const Dims& R = p.shape.schedule.ranks;
    const auto sigma = materialize_sigma(p.spectrum);
    const std::size_t dout = p.shape.out_modes();
    std::vector<TTCore> chain;
    for (std::size_t g = 0; g < n.size(); ++g) {
      TTCore c(R[g], n[g], R[g + 1]);
      for (std::size_t a = 0; a < R[g]; ++a)
        for (std::size_t i = 0; i < n[g]; ++i)
          for (std::size_t b = 0; b < R[g + 1]; ++b) {
            if (g < dout) {
              c(a, i, b) = frames[g]((a * n[g] + i), b) * (g + 1 == dout ? sigma[b] : 1.0);
            } else {
              c(a, i, b) = frames[g]((b * n[g] + i), a);
            }
          }
      chain.push_back(std::move(c));
    }
    const Tensor t = oracle::tt_brute_force(chain);
    const Matrix w = assemble_sttp(p);
    ASSERT_EQ(t.size(), 24u);
    for (std::size_t k = 0; k < 24; ++k) EXPECT_NEAR(w.values()[k], t[k], 1e-13);
  }
}

TEST(AssembleSttp, DecodeCoresEqualsIndividualDecode) {
  const SttpParams p = random_sttp(16, 72, 4, SpectrumMode::Learned, 3);
  const auto frames = decode_cores(p);
  for (std::size_t k = 0; k < frames.size(); ++k) EXPECT_EQ(frames[k], decode(p.cores[k]));
}

TEST(InColumnPermutation, IsPermutation) {
  for (std::size_t d : {6u, 12u, 72u, 30u}) {
    auto perm = in_column_permutation(factorize(d));
    std::sort(perm.begin(), perm.end());
    for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(perm[i], i);
  }
  EXPECT_EQ(in_column_permutation(factorize(6)), (std::vector<std::size_t>{0, 3, 1, 4, 2, 5}));
}

TEST(EdgeCase, Examples) {
  const auto a = edge_case_is_svdp(4, 4, 4);
  EXPECT_TRUE(a.is_svdp);
  EXPECT_EQ(a.sttp_dof, a.svdp_dof);
  EXPECT_FALSE(edge_case_is_svdp(16, 72, 4).is_svdp);
  const auto c = edge_case_is_svdp(7, 13, 1);
  EXPECT_TRUE(c.is_svdp);
  EXPECT_EQ(c.sttp_dof, c.svdp_dof);
}

TEST(EdgeCase, WitnessReproducesWeight) {
  for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned}) {
    const SttpParams p = random_sttp(4, 6, 2, mode, 8);
    const SvdpParams q = svdp_witness(p);
    EXPECT_NO_THROW(validate(q));
    EXPECT_LE(oracle::max_abs_diff(assemble(q), assemble_sttp(p)), 1e-12);
    if (edge_case_is_svdp(4, 6, 2, mode).is_svdp) {
      EXPECT_EQ(q.dof(), p.dof());
    }
  }
}

TEST(SttpValidate, Rejects) {
  SttpParams p = make_sttp(8, 6, 2, SpectrumMode::Learned, InitScheme::identity(), 0);
  SttpParams bad = p;
  bad.cores.pop_back();
  EXPECT_THROW(validate(bad), ShapeError);
  bad = p;
  bad.cores[0] = HouseholderLayout(bad.cores[0].rows(), bad.cores[0].cols(), LayoutVariant::Full);
  EXPECT_THROW(validate(bad), ShapeError);
  bad = p;
  bad.spectrum = SpectrumParams::identity(2);
  EXPECT_THROW(validate(bad), ShapeError);
}

TEST(AssembleSttp, JacobianRank) {
  for (const auto& [dout, din, r] : std::vector<std::array<std::size_t, 3>>{{4, 6, 2}, {8, 4, 2}, {8, 8, 3}}) {
    for (auto mode : {SpectrumMode::Identity, SpectrumMode::Learned}) {
      SttpParams p = random_sttp(dout, din, r, mode, dout * 10 + r);
      auto f = [&](const std::vector<double>& t) {
        SttpParams c = p;
        c.assign(t);
        return assemble_sttp(c);
      };
      const Matrix jac = oracle::fd_jacobian(f, p.flat());
      const std::size_t want = mode == SpectrumMode::Identity ? p.dof() : p.dof() - 1;
      EXPECT_EQ(oracle::numerical_rank(jac, 1e-7), want) << dout << "x" << din << " r=" << r;
    }
  }
}
