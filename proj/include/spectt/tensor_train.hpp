#pragma once

// Tensor-train cores, rank caps and chain contraction.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"

namespace spectt {

/// A (r_left, n, r_right) TT-core.
struct TTCore {
  Tensor data;

  TTCore() = default;
  explicit TTCore(Tensor t) : data(std::move(t)) {
    if (data.rank() != 3)
      throw ShapeError("TTCore: expected 3 axes, got " + dims_string(data.dims()));
  }
  TTCore(std::size_t r_left, std::size_t n, std::size_t r_right)
      : data(Dims{r_left, n, r_right}) {}

  /// Builds a core whose matricization must be orthonormal (to 1e-8).
  static TTCore orthonormal(Tensor t, std::size_t index = 0) {
    TTCore c(std::move(t));
    const double res = orthonormality_residual(matricize_core(c.data));
    if (res > 1e-8) {
      throw PreconditionError("TT-core " + std::to_string(index) +
                              " matricization is not orthonormal (residual " +
                              std::to_string(res) + ")");
    }
    return c;
  }

  std::size_t r_left() const { return data.dims()[0]; }
  std::size_t n() const { return data.dims()[1]; }
  std::size_t r_right() const { return data.dims()[2]; }

  double operator()(std::size_t a, std::size_t i, std::size_t b) const {
    return data[(a * n() + i) * r_right() + b];
  }
  double& operator()(std::size_t a, std::size_t i, std::size_t b) {
    return data[(a * n() + i) * r_right() + b];
  }
};

/// R^max_k = min(n_1⋯n_k, n_{k+1}⋯n_D) for k = 1..D−1, with R_0 = R_D = 1.
inline Dims rank_caps(std::span<const std::size_t> n) {
  if (n.empty()) throw DomainError("rank_caps: empty factor list");
  const std::size_t total = product(n);
  Dims caps(n.size() + 1, 1);
  std::size_t prefix = 1;
  for (std::size_t k = 1; k < n.size(); ++k) {
    prefix *= n[k - 1];
    caps[k] = std::min(prefix, total / prefix);
  }
  return caps;
}

struct RankSchedule {
  Dims n;              // mode sizes
  std::size_t r = 0;   // rank hyperparameter
  Dims ranks;          // R_0..R_D

  bool operator==(const RankSchedule&) const = default;
};

/// R_k = min(r, R^max_k) for every interior k.
inline RankSchedule make_rank_schedule(Dims n, std::size_t r) {
  if (r == 0) throw DomainError("make_rank_schedule: rank must be positive");
  Dims ranks = rank_caps(n);
  for (std::size_t k = 1; k + 1 < ranks.size(); ++k) ranks[k] = std::min(r, ranks[k]);
  return RankSchedule{std::move(n), r, std::move(ranks)};
}

namespace detail {

inline void check_junctions(std::span<const TTCore> cores) {
  if (cores.empty()) throw ShapeError("TT chain: no cores");
  for (std::size_t k = 0; k + 1 < cores.size(); ++k) {
    if (cores[k].r_right() != cores[k + 1].r_left()) {
      throw ShapeError("TT chain: rank mismatch at junction " + std::to_string(k + 1) +
                       " (" + std::to_string(cores[k].r_right()) + " vs " +
                       std::to_string(cores[k + 1].r_left()) + ")");
    }
  }
}

}  // namespace detail

/// Left-to-right accumulation of a chain with R_0 = 1 into an
/// (n_1⋯n_D) × R_D matrix; row index fuses (i_1..i_D) in row-major order.
inline Matrix chain_matrix(std::span<const TTCore> cores) {
  detail::check_junctions(cores);
  if (cores.front().r_left() != 1)
    throw ShapeError("TT chain: leading rank must be 1, got " +
                     std::to_string(cores.front().r_left()));
  Matrix acc = matricize_core(cores.front().data);
  for (std::size_t k = 1; k < cores.size(); ++k) {
    const TTCore& c = cores[k];
    // (P × R_{k-1}) · (R_{k-1} × n_k R_k), then reshape to (P n_k × R_k).
    Matrix next = matmul(acc, Matrix(c.r_left(), c.n() * c.r_right(), c.data.values()));
    acc = Matrix(acc.rows() * c.n(), c.r_right(), std::move(next.values()));
  }
  return acc;
}

/// Full tensor of a chain with R_0 = R_D = 1.
inline Tensor tt_contract(std::span<const TTCore> cores) {
  detail::check_junctions(cores);
  if (cores.back().r_right() != 1)
    throw ShapeError("tt_contract: trailing rank must be 1, got " +
                     std::to_string(cores.back().r_right()));
  Matrix m = chain_matrix(cores);
  Dims dims;
  for (const auto& c : cores) dims.push_back(c.n());
  return Tensor(std::move(dims), std::move(m.values()));
}

/// Frame U with U[ī, α] = Σ_β U¹_{1,i_1,β_1} ⋯ U^D_{β_{D−1},i_D,α}. Every
/// core's matricization must be orthonormal; the result then is too.
inline Matrix frames_from_cores(std::span<const TTCore> cores, std::size_t r) {
  detail::check_junctions(cores);
  if (cores.back().r_right() != r)
    throw ShapeError("frames_from_cores: last rank " + std::to_string(cores.back().r_right()) +
                     " differs from r = " + std::to_string(r));
  for (std::size_t k = 0; k < cores.size(); ++k) {
    const double res = orthonormality_residual(matricize_core(cores[k].data));
    if (res > 1e-8)
      throw PreconditionError("frames_from_cores: core " + std::to_string(k + 1) +
                              " is not orthonormal (residual " + std::to_string(res) + ")");
  }
  return chain_matrix(cores);
}

/// C'_{:,i,:} = Q_{k−1}ᵀ C_{:,i,:} Q_k with `q[k]` for junction k = 1..D−1;
/// the outer junctions use identities. Leaves the chain's contraction and
/// the orthonormality of its matricizations unchanged.
inline std::vector<TTCore> gauge_transform(std::span<const TTCore> cores,
                                           std::span<const Matrix> q) {
  detail::check_junctions(cores);
  if (q.size() + 1 != cores.size())
    throw ShapeError("gauge_transform: need " + std::to_string(cores.size() - 1) +
                     " junction matrices, got " + std::to_string(q.size()));
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k].rows() != cores[k].r_right() || q[k].cols() != cores[k].r_right())
      throw ShapeError("gauge_transform: junction " + std::to_string(k + 1) + " size mismatch");
    if (!is_orthonormal(q[k], 1e-10))
      throw DomainError("gauge_transform: junction matrix " + std::to_string(k + 1) +
                        " is not orthogonal");
  }
  std::vector<TTCore> out;
  out.reserve(cores.size());
  for (std::size_t k = 0; k < cores.size(); ++k) {
    const TTCore& c = cores[k];
    const Matrix left = k == 0 ? Matrix::identity(c.r_left()) : q[k - 1];
    const Matrix right = k + 1 == cores.size() ? Matrix::identity(c.r_right()) : q[k];
    TTCore t(c.r_left(), c.n(), c.r_right());
    for (std::size_t i = 0; i < c.n(); ++i) {
      Matrix slice(c.r_left(), c.r_right());
      for (std::size_t a = 0; a < c.r_left(); ++a)
        for (std::size_t b = 0; b < c.r_right(); ++b) slice(a, b) = c(a, i, b);
      const Matrix s = matmul(matmul_tn(left, slice), right);
      for (std::size_t a = 0; a < c.r_left(); ++a)
        for (std::size_t b = 0; b < c.r_right(); ++b) t(a, i, b) = s(a, b);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace spectt
