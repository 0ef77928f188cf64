#pragma once

// Spectral tensor-train parameterization. W ∈ R^{d_out×d_in} is tensorized
// over n = (out factors..., in factors reversed) and represented as a TT
// chain U¹ ⋯ U^{D_out} Σ V^{D_in}ᵀ ⋯ V¹ᵀ whose core matricizations are
// Householder frames. Cores away from Σ use the reduced layout, which removes
// the TT gauge freedom.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"
#include "spectt/householder.hpp"
#include "spectt/spectral.hpp"
#include "spectt/svdp.hpp"
#include "spectt/tensor_train.hpp"

namespace spectt {

struct DimFactorization {
  std::size_t d = 0;
  Dims factors;  // ascending primes, product d

  bool operator==(const DimFactorization&) const = default;
};

/// Ascending prime factorization with repetition.
inline DimFactorization factorize(std::size_t d) {
  if (d <= 1)
    throw DomainError("factorize: dimension " + std::to_string(d) +
                      " cannot be parameterized (need d >= 2)");
  DimFactorization f{d, {}};
  std::size_t rest = d;
  for (std::size_t p = 2; p * p <= rest; ++p) {
    while (rest % p == 0) {
      f.factors.push_back(p);
      rest /= p;
    }
  }
  if (rest > 1) f.factors.push_back(rest);
  return f;
}

/// Per-core frame size and layout variant, in global chain order.
struct CoreSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
  LayoutVariant variant = LayoutVariant::Full;
  bool v_side = false;

  bool operator==(const CoreSpec&) const = default;
};

/// Everything about an STTP instance except the parameter values.
struct SttpShape {
  DimFactorization out_fac, in_fac;
  std::size_t r = 0;
  SpectrumMode mode = SpectrumMode::Learned;
  RankSchedule schedule;  // over n = (out..., in reversed)

  std::size_t d_out() const noexcept { return out_fac.d; }
  std::size_t d_in() const noexcept { return in_fac.d; }
  std::size_t out_modes() const noexcept { return out_fac.factors.size(); }
  std::size_t in_modes() const noexcept { return in_fac.factors.size(); }
  std::size_t num_cores() const noexcept { return out_modes() + in_modes(); }

  bool operator==(const SttpShape&) const = default;
};

inline SttpShape make_sttp_shape(std::size_t d_out, std::size_t d_in, std::size_t r,
                                 SpectrumMode mode) {
  if (r == 0 || r > rank_cap(d_out, d_in))
    throw DomainError("sttp: rank " + std::to_string(r) + " outside [1, " +
                      std::to_string(rank_cap(d_out, d_in)) + "]");
  SttpShape s{factorize(d_out), factorize(d_in), r, mode, {}};
  Dims n = s.out_fac.factors;
  n.insert(n.end(), s.in_fac.factors.rbegin(), s.in_fac.factors.rend());
  s.schedule = make_rank_schedule(std::move(n), r);
  return s;
}

/// Matricized core sizes and variants. U-side core k is (R_{k−1} n_k) × R_k,
/// V-side core k is (R_k n_k) × R_{k−1}. Reduced everywhere except the two
/// cores adjacent to Σ; with the identity spectrum the U-side one is reduced
/// as well.
inline std::vector<CoreSpec> core_size_schedule(const SttpShape& s) {
  const Dims& n = s.schedule.n;
  const Dims& R = s.schedule.ranks;
  const std::size_t dout = s.out_modes();
  std::vector<CoreSpec> out;
  for (std::size_t g = 0; g < n.size(); ++g) {
    if (g < dout) {
      const bool adjacent = g + 1 == dout;
      const LayoutVariant v = !adjacent || s.mode == SpectrumMode::Identity
                                  ? LayoutVariant::Reduced
                                  : LayoutVariant::Full;
      out.push_back({R[g] * n[g], R[g + 1], v, false});
    } else {
      const LayoutVariant v = g == dout ? LayoutVariant::Full : LayoutVariant::Reduced;
      out.push_back({R[g + 1] * n[g], R[g], v, true});
    }
  }
  return out;
}

/// Σ_k R_{k−1} n_k R_k − Σ_{interior k} R_k² with a learned spectrum; the
/// identity spectrum drops the r spectrum scalars and r(r−1)/2 more cells of
/// the reduced Σ-adjacent U core.
inline std::size_t sttp_dof(const SttpShape& s) {
  const Dims& n = s.schedule.n;
  const Dims& R = s.schedule.ranks;
  std::size_t pos = 0, neg = 0;
  for (std::size_t k = 0; k < n.size(); ++k) pos += R[k] * n[k] * R[k + 1];
  for (std::size_t k = 1; k + 1 < R.size(); ++k) neg += R[k] * R[k];
  const std::size_t learned = pos - neg;
  return s.mode == SpectrumMode::Identity ? learned - s.r * (s.r + 1) / 2 : learned;
}

inline std::size_t sttp_dof(std::size_t d_out, std::size_t d_in, std::size_t r,
                            SpectrumMode mode) {
  return sttp_dof(make_sttp_shape(d_out, d_in, r, mode));
}

struct SttpParams {
  SttpShape shape;
  std::vector<HouseholderLayout> cores;  // global chain order
  SpectrumParams spectrum;

  std::size_t dof() const noexcept {
    std::size_t k = spectrum.dof();
    for (const auto& c : cores) k += c.dof();
    return k;
  }

  /// Free parameters: core cells in chain order, then s.
  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(dof());
    for (const auto& c : cores) out.insert(out.end(), c.params().begin(), c.params().end());
    if (spectrum.learned()) out.insert(out.end(), spectrum.s.begin(), spectrum.s.end());
    return out;
  }

  void assign(std::span<const double> theta) {
    if (theta.size() != dof())
      throw ShapeError("SttpParams::assign: expected " + std::to_string(dof()) +
                       " values, got " + std::to_string(theta.size()));
    auto it = theta.begin();
    for (auto& c : cores) {
      std::copy_n(it, c.dof(), c.params().begin());
      it += static_cast<std::ptrdiff_t>(c.dof());
    }
    if (spectrum.learned()) std::copy_n(it, spectrum.s.size(), spectrum.s.begin());
  }

  bool operator==(const SttpParams&) const = default;
};

inline void validate(const SttpParams& p) {
  const auto specs = core_size_schedule(p.shape);
  if (specs.size() != p.cores.size())
    throw ShapeError("SttpParams: expected " + std::to_string(specs.size()) + " cores");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& c = p.cores[k];
    if (c.rows() != specs[k].rows || c.cols() != specs[k].cols ||
        c.variant() != specs[k].variant)
      throw ShapeError("SttpParams: core " + std::to_string(k + 1) + " layout mismatch");
  }
  if (p.spectrum.rank() != p.shape.r || p.spectrum.mode != p.shape.mode ||
      (p.spectrum.learned() && p.spectrum.s.size() != p.shape.r))
    throw ShapeError("SttpParams: spectrum does not match the shape");
}

/// Initial parameters. Every core frame comes from `init` with its own seed;
/// encode signs of interior cores are dropped (any orthonormal core is a
/// valid start) and s = 1.
inline SttpParams make_sttp(std::size_t d_out, std::size_t d_in, std::size_t r,
                            SpectrumMode mode, InitScheme init, std::uint64_t seed,
                            double lambda = 0.0) {
  SttpParams p;
  p.shape = make_sttp_shape(d_out, d_in, r, mode);
  const auto specs = core_size_schedule(p.shape);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    p.cores.push_back(
        init_layout(init, specs[k].rows, specs[k].cols, seed + 7919 * (k + 1), specs[k].variant)
            .layout);
  }
  p.spectrum = mode == SpectrumMode::Identity ? SpectrumParams::identity(r)
                                              : SpectrumParams::learned_ones(r, mode, lambda);
  return p;
}

/// Decodes all core frames, batching cores of equal frame size.
inline std::vector<Matrix> decode_cores(const SttpParams& p) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < p.cores.size(); ++k)
    groups[{p.cores[k].rows(), p.cores[k].cols()}].push_back(k);
  std::vector<Matrix> frames(p.cores.size());
  for (const auto& [size, members] : groups) {
    std::vector<HouseholderLayout> batch;
    for (std::size_t k : members) batch.push_back(p.cores[k]);
    std::vector<Matrix> out = decode_batch(batch);
    for (std::size_t i = 0; i < members.size(); ++i) frames[members[i]] = std::move(out[i]);
  }
  return frames;
}

/// Core tensors of U in chain order: U^k has dims (R_{k−1}, n_k, R_k).
inline std::vector<TTCore> u_cores(const SttpShape& s, std::span<const Matrix> frames) {
  const Dims& n = s.schedule.n;
  const Dims& R = s.schedule.ranks;
  std::vector<TTCore> out;
  for (std::size_t g = 0; g < s.out_modes(); ++g)
    out.emplace_back(Tensor({R[g], n[g], R[g + 1]}, frames[g].values()));
  return out;
}

/// Core tensors of V in its own natural order V¹..V^{D_in}: V^k has dims
/// (R^in_{k−1}, n^in_k, R^in_k), R^in_0 = 1, R^in_{D_in} = r.
inline std::vector<TTCore> v_cores(const SttpShape& s, std::span<const Matrix> frames) {
  const Dims& n = s.schedule.n;
  const Dims& R = s.schedule.ranks;
  const std::size_t D = s.num_cores();
  std::vector<TTCore> out;
  for (std::size_t g = D; g-- > s.out_modes();)
    out.emplace_back(Tensor({R[g + 1], n[g], R[g]}, frames[g].values()));
  return out;
}

/// perm[c] = row of the natural V frame that matches column c of W. W's
/// column index runs over the in factors in chain order (reversed), V's rows
/// over the in factors in ascending order.
inline std::vector<std::size_t> in_column_permutation(const DimFactorization& in_fac) {
  const Dims& f = in_fac.factors;
  const std::size_t D = f.size();
  std::vector<std::size_t> perm(in_fac.d);
  std::vector<std::size_t> digits(D);
  for (std::size_t c = 0; c < in_fac.d; ++c) {
    // Column digits over dims (f[D−1], ..., f[0]): digit for f[k] at slot D−1−k.
    std::size_t rest = c;
    for (std::size_t slot = D; slot-- > 0;) {
      const std::size_t k = D - 1 - slot;
      digits[k] = rest % f[k];
      rest /= f[k];
    }
    std::size_t row = 0;
    for (std::size_t k = 0; k < D; ++k) row = row * f[k] + digits[k];
    perm[c] = row;
  }
  return perm;
}

inline Matrix permute_rows(const Matrix& m, std::span<const std::size_t> perm) {
  Matrix out(perm.size(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(perm[i], j);
  return out;
}

/// The SVD-form factors of an STTP instance: W = U diag(sigma) Vᵀ with V
/// already in W's column order.
struct SttpFactors {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

inline SttpFactors sttp_factors(const SttpParams& p) {
  validate(p);
  const std::vector<Matrix> frames = decode_cores(p);
  const auto uc = u_cores(p.shape, frames);
  const auto vc = v_cores(p.shape, frames);
  return SttpFactors{chain_matrix(uc), materialize_sigma(p.spectrum),
                     permute_rows(chain_matrix(vc), in_column_permutation(p.shape.in_fac))};
}

inline Matrix assemble_sttp(const SttpParams& p) {
  SttpFactors f = sttp_factors(p);
  return matmul_nt(scale_columns(std::move(f.u), f.sigma), f.v);
}

struct EdgeCaseReport {
  bool is_svdp = false;
  std::size_t sttp_dof = 0;
  std::size_t svdp_dof = 0;
};

/// Whether every interior rank other than the middle one sits at its cap,
/// in which case STTP spans the same rank-r matrices as SVDP with the same
/// number of free scalars.
inline EdgeCaseReport edge_case_is_svdp(std::size_t d_out, std::size_t d_in, std::size_t r,
                                        SpectrumMode mode = SpectrumMode::Learned) {
  const SttpShape s = make_sttp_shape(d_out, d_in, r, mode);
  const Dims caps = rank_caps(s.schedule.n);
  bool saturated = true;
  for (std::size_t k = 1; k + 1 < caps.size(); ++k) {
    if (k == s.out_modes()) continue;
    saturated = saturated && s.schedule.ranks[k] == caps[k];
  }
  return {saturated, sttp_dof(s), svdp_dof(d_out, d_in, r, mode)};
}

/// SVDP parameters assembling to the same W as `p`.
inline SvdpParams svdp_witness(const SttpParams& p) {
  const SttpFactors f = sttp_factors(p);
  return svdp_from_frames(f.u, f.sigma, f.v, p.spectrum.mode, p.spectrum.lambda);
}

}  // namespace spectt
