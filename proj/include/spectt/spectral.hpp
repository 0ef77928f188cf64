#pragma once

// Spectrum parameterizations and the spectral diagnostics built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"

namespace spectt {

enum class SpectrumMode { Identity, Learned, LearnedRegularized };

inline const char* to_string(SpectrumMode m) {
  switch (m) {
    case SpectrumMode::Identity: return "identity";
    case SpectrumMode::Learned: return "learned";
    default: return "regularized";
  }
}

/// Σ = diag(signs) for the identity spectrum, diag(signs ⊙ s / ‖s‖_∞) for the
/// learned ones. `signs` carries the column signs folded in from encoding the
/// frames; it is never trained.
struct SpectrumParams {
  SpectrumMode mode = SpectrumMode::Learned;
  double lambda = 0.0;        // D-optimal weight, LearnedRegularized only
  std::vector<double> s;      // empty for Identity
  std::vector<double> signs;  // length r, entries ±1

  std::size_t rank() const noexcept { return signs.size(); }
  bool learned() const noexcept { return mode != SpectrumMode::Identity; }
  std::size_t dof() const noexcept { return learned() ? s.size() : 0; }

  static SpectrumParams identity(std::size_t r) {
    return {SpectrumMode::Identity, 0.0, {}, std::vector<double>(r, 1.0)};
  }
  static SpectrumParams learned_ones(std::size_t r, SpectrumMode mode = SpectrumMode::Learned,
                                     double lambda = 0.0) {
    return {mode, lambda, std::vector<double>(r, 1.0), std::vector<double>(r, 1.0)};
  }

  bool operator==(const SpectrumParams&) const = default;
};

/// Index of the entry attaining ‖s‖_∞; the smallest index wins ties.
inline std::size_t argmax_abs(std::span<const double> s) {
  std::size_t m = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (std::abs(s[i]) > std::abs(s[m])) m = i;
  return m;
}

/// True when two or more entries share the maximal magnitude, where the
/// ∞-norm normalization is not differentiable.
inline bool has_max_tie(std::span<const double> s, double rel_tol = 1e-12) {
  if (s.size() < 2) return false;
  const double top = std::abs(s[argmax_abs(s)]);
  std::size_t count = 0;
  for (double v : s)
    if (std::abs(std::abs(v) - top) <= rel_tol * top) ++count;
  return count > 1;
}

inline std::vector<double> materialize_sigma(const SpectrumParams& sp) {
  std::vector<double> sigma = sp.signs;
  if (!sp.learned()) return sigma;
  if (sp.s.size() != sp.signs.size())
    throw ShapeError("materialize_sigma: s and signs differ in length");
  const double inf = sp.s.empty() ? 0.0 : std::abs(sp.s[argmax_abs(sp.s)]);
  if (inf == 0.0) throw DomainError("materialize_sigma: degenerate spectrum, s = 0");
  for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] *= sp.s[i] / inf;
  return sigma;
}

/// −Σ log|σ_i|.
inline double d_optimal_penalty(std::span<const double> sigma) {
  double p = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] == 0.0) {
      throw DomainError("d_optimal_penalty: sigma[" + std::to_string(i) +
                        "] = 0 gives an infinite penalty");
    }
    p -= std::log(std::abs(sigma[i]));
  }
  return p;
}

/// Optimization form of the penalty: |σ| is floored at `eps` before the log.
inline double d_optimal_penalty_floored(std::span<const double> sigma, double eps = 1e-12) {
  double p = 0.0;
  for (double s : sigma) p -= std::log(std::max(std::abs(s), eps));
  return p;
}

/// Product bound on the Lipschitz constant of a layer stack.
inline double lipschitz_bound(std::span<const double> layer_sigma_max) {
  double k = 1.0;
  for (double s : layer_sigma_max) k *= s;
  return k;
}

/// ‖W‖_F² / σ_max² computed exactly from the diagonal of a parameterized W.
inline double stable_rank(std::span<const double> sigma) {
  double sum = 0.0, top = 0.0;
  for (double s : sigma) {
    sum += s * s;
    top = std::max(top, s * s);
  }
  if (top == 0.0) throw DomainError("stable_rank: zero spectrum");
  return sum / top;
}

/// ‖m‖_F² / σ_max(m)² with σ_max from power iteration.
inline double stable_rank(const Matrix& m, std::uint64_t seed = 0) {
  const double fro = frobenius_norm(m);
  if (fro == 0.0) throw DomainError("stable_rank: zero matrix");
  const double top = power_iteration_sigma_max(m, seed);
  return (fro * fro) / (top * top);
}

/// Kernel-matrix shape of a convolution: (C_out, C_in·M_1⋯M_N). The layer's
/// true Lipschitz constant can exceed σ_max of this matrix.
inline std::pair<std::size_t, std::size_t> conv_kernel_matrix_dims(
    std::size_t c_out, std::size_t c_in, std::span<const std::size_t> kernel) {
  if (c_out == 0 || c_in == 0) throw DomainError("conv_kernel_matrix_dims: zero channels");
  for (std::size_t m : kernel)
    if (m == 0) throw DomainError("conv_kernel_matrix_dims: zero kernel extent");
  return {c_out, c_in * product(kernel)};
}

struct LayerSummary {
  std::size_t d_out = 0;
  std::size_t d_in = 0;
  std::size_t dof = 0;    // free scalars of the weight under its scheme
  std::size_t extra = 0;  // unparameterized scalars (bias, norms, ...)
  std::size_t numel() const noexcept { return d_out * d_in; }
};

struct NetworkSummary {
  std::vector<LayerSummary> layers;
};

/// Z = 100 · Σ(dof + C) / Σ(numel + C).
inline double compression_ratio(const NetworkSummary& net) {
  if (net.layers.empty()) throw DomainError("compression_ratio: empty network");
  std::uint64_t num = 0, den = 0;
  for (const auto& l : net.layers) {
    num += l.dof + l.extra;
    den += l.numel() + l.extra;
  }
  if (den == 0) throw DomainError("compression_ratio: zero denominator");
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace spectt
