#pragma once

// SVD parameterization: W = U Σ Vᵀ with U, V Householder frames.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"
#include "spectt/householder.hpp"
#include "spectt/spectral.hpp"

namespace spectt {

inline std::size_t rank_cap(std::size_t d_out, std::size_t d_in) {
  return std::min(d_out, d_in);
}

/// r(d_out + d_in) − r² with a learned spectrum, r(d_out + d_in) − r(3r+1)/2
/// with the identity spectrum.
inline std::size_t svdp_dof(std::size_t d_out, std::size_t d_in, std::size_t r,
                            SpectrumMode mode) {
  if (r == 0 || r > rank_cap(d_out, d_in)) {
    throw DomainError("svdp_dof: rank " + std::to_string(r) + " outside [1, " +
                      std::to_string(rank_cap(d_out, d_in)) + "]");
  }
  const std::size_t base = r * (d_out + d_in);
  return mode == SpectrumMode::Identity ? base - r * (3 * r + 1) / 2 : base - r * r;
}

struct SvdpParams {
  std::size_t d_out = 0, d_in = 0, rank = 0;
  HouseholderLayout u;  // d_out × r
  HouseholderLayout v;  // d_in × r
  SpectrumParams spectrum;

  std::size_t dof() const noexcept { return u.dof() + v.dof() + spectrum.dof(); }

  /// Free parameters in file/gradient order: u cells, v cells, s.
  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(dof());
    out.insert(out.end(), u.params().begin(), u.params().end());
    out.insert(out.end(), v.params().begin(), v.params().end());
    if (spectrum.learned()) out.insert(out.end(), spectrum.s.begin(), spectrum.s.end());
    return out;
  }

  void assign(std::span<const double> theta) {
    if (theta.size() != dof())
      throw ShapeError("SvdpParams::assign: expected " + std::to_string(dof()) +
                       " values, got " + std::to_string(theta.size()));
    auto it = theta.begin();
    std::copy_n(it, u.dof(), u.params().begin());
    it += static_cast<std::ptrdiff_t>(u.dof());
    std::copy_n(it, v.dof(), v.params().begin());
    it += static_cast<std::ptrdiff_t>(v.dof());
    if (spectrum.learned()) std::copy_n(it, spectrum.s.size(), spectrum.s.begin());
  }

  bool operator==(const SvdpParams&) const = default;
};

/// Checks dims and rank. With `canonical`, also checks the layout variants:
/// reduced U for the identity spectrum, full otherwise; V always full.
inline void validate(const SvdpParams& p, bool canonical = true) {
  if (p.rank == 0 || p.rank > rank_cap(p.d_out, p.d_in))
    throw DomainError("SvdpParams: rank " + std::to_string(p.rank) + " exceeds cap " +
                      std::to_string(rank_cap(p.d_out, p.d_in)));
  if (p.u.rows() != p.d_out || p.u.cols() != p.rank || p.v.rows() != p.d_in ||
      p.v.cols() != p.rank)
    throw ShapeError("SvdpParams: layout dims disagree with (d_out, d_in, r)");
  if (p.spectrum.rank() != p.rank || (p.spectrum.learned() && p.spectrum.s.size() != p.rank))
    throw ShapeError("SvdpParams: spectrum length differs from rank");
  if (canonical) {
    const LayoutVariant want_u = p.spectrum.learned() ? LayoutVariant::Full
                                                      : LayoutVariant::Reduced;
    if (p.u.variant() != want_u || p.v.variant() != LayoutVariant::Full)
      throw DomainError("SvdpParams: layout variants do not match the spectrum mode");
  }
}

/// Initial parameters: frames from `init`, s = 1, and the encode signs of
/// both frames folded into Σ so that W starts as U_init V_initᵀ.
inline SvdpParams make_svdp(std::size_t d_out, std::size_t d_in, std::size_t r,
                            SpectrumMode mode, InitScheme init, std::uint64_t seed,
                            double lambda = 0.0) {
  svdp_dof(d_out, d_in, r, mode);  // rank check
  const LayoutVariant uvar =
      mode == SpectrumMode::Identity ? LayoutVariant::Reduced : LayoutVariant::Full;
  EncodedFrame u = init_layout(init, d_out, r, seed, uvar);
  EncodedFrame v = init_layout(init, d_in, r, seed + 0x9e3779b97f4a7c15ULL);
  SpectrumParams sp = mode == SpectrumMode::Identity
                          ? SpectrumParams::identity(r)
                          : SpectrumParams::learned_ones(r, mode, lambda);
  for (std::size_t i = 0; i < r; ++i) sp.signs[i] = u.signs[i] * v.signs[i];
  return SvdpParams{d_out, d_in, r, std::move(u.layout), std::move(v.layout), std::move(sp)};
}

/// W = (U Σ) Vᵀ.
inline Matrix assemble(const SvdpParams& p) {
  validate(p, false);
  const std::vector<double> sigma = materialize_sigma(p.spectrum);
  return matmul_nt(scale_columns(decode(p.u), sigma), decode(p.v));
}

/// Parameters reproducing U diag(sigma) Vᵀ for orthonormal U, V. Encode
/// signs are absorbed into Σ. With a learned mode the spectrum is stored as
/// s = sigma (so Σ = sigma / max|sigma|).
inline SvdpParams svdp_from_frames(const Matrix& u, std::span<const double> sigma,
                                   const Matrix& v, SpectrumMode mode, double lambda = 0.0) {
  const std::size_t r = u.cols();
  if (v.cols() != r || sigma.size() != r) throw ShapeError("svdp_from_frames: rank mismatch");
  if (mode == SpectrumMode::Identity) {
    // Σ = I up to signs; fold any sign of sigma into V, then pick the
    // upper-triangular representative for U.
    Matrix vs = v;
    for (std::size_t i = 0; i < vs.rows(); ++i)
      for (std::size_t j = 0; j < r; ++j) vs(i, j) *= sigma[j] < 0.0 ? -1.0 : 1.0;
    auto [uc, o] = canonicalize_upper(u);
    EncodedFrame eu = encode(uc, LayoutVariant::Reduced);
    EncodedFrame ev = encode(matmul(vs, o));
    SpectrumParams sp = SpectrumParams::identity(r);
    for (std::size_t i = 0; i < r; ++i) sp.signs[i] = eu.signs[i] * ev.signs[i];
    return SvdpParams{u.rows(), v.rows(), r, std::move(eu.layout), std::move(ev.layout),
                      std::move(sp)};
  }
  EncodedFrame eu = encode(u);
  EncodedFrame ev = encode(v);
  SpectrumParams sp{mode, lambda, std::vector<double>(sigma.begin(), sigma.end()),
                    std::vector<double>(r, 1.0)};
  for (std::size_t i = 0; i < r; ++i) sp.signs[i] = eu.signs[i] * ev.signs[i];
  return SvdpParams{u.rows(), v.rows(), r, std::move(eu.layout), std::move(ev.layout),
                    std::move(sp)};
}

/// Identity-spectrum parameters whose frames are (UQ, VQ) for orthogonal Q.
/// Both layouts of the result are full; assemble() is unchanged.
inline SvdpParams redundancy_witness(const SvdpParams& p, const Matrix& q) {
  if (p.spectrum.learned())
    throw DomainError("redundancy_witness: requires the identity spectrum");
  if (q.rows() != p.rank || q.cols() != p.rank)
    throw ShapeError("redundancy_witness: Q must be r×r");
  if (!is_orthonormal(q, 1e-10))
    throw DomainError("redundancy_witness: Q is not orthogonal");
  const Matrix us = scale_columns(decode(p.u), p.spectrum.signs);
  EncodedFrame eu = encode(matmul(us, q));
  EncodedFrame ev = encode(matmul(decode(p.v), q));
  SpectrumParams sp = SpectrumParams::identity(p.rank);
  for (std::size_t i = 0; i < p.rank; ++i) sp.signs[i] = eu.signs[i] * ev.signs[i];
  return SvdpParams{p.d_out, p.d_in, p.rank, std::move(eu.layout), std::move(ev.layout),
                    std::move(sp)};
}

}  // namespace spectt
