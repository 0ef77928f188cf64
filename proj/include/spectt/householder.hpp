#pragma once

// Orthonormal frames as products of Householder reflections,
//
//   Q = H_1 H_2 ⋯ H_r I_{d×r},   H_i = I − 2 u_i u_iᵀ,   u_i = h_i / ‖h_i‖,
//
// where h_i is column i of a d×r parameter matrix laid out LAPACK-style:
// zeros above the diagonal, a structural 1 on the diagonal, free cells below.
// The reduced variant also pins rows i+1..r of column i to zero, which makes
// the leading r×r block of Q upper triangular.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"

namespace spectt {

enum class LayoutVariant { Full, Reduced };

inline const char* to_string(LayoutVariant v) {
  return v == LayoutVariant::Full ? "full" : "reduced";
}

/// Free-parameter layout of a d×r Householder parameterization, optionally
/// embedded in a larger padded d_pad×r_pad cell matrix for batching.
class HouseholderLayout {
 public:
  HouseholderLayout() = default;

  HouseholderLayout(std::size_t rows, std::size_t cols, LayoutVariant variant)
      : HouseholderLayout(rows, cols, variant, rows, cols) {}

  HouseholderLayout(std::size_t rows, std::size_t cols, LayoutVariant variant,
                    std::size_t pad_rows, std::size_t pad_cols)
      : rows_(rows), cols_(cols), pad_rows_(pad_rows), pad_cols_(pad_cols),
        variant_(variant) {
    if (cols == 0 || rows == 0) throw DomainError("HouseholderLayout: empty frame");
    if (cols > rows) {
      throw DomainError("HouseholderLayout: frame " + std::to_string(rows) +
                        "x" + std::to_string(cols) + " has more columns than rows");
    }
    if (pad_rows < rows || pad_cols < cols || pad_cols > pad_rows) {
      throw DomainError("HouseholderLayout: invalid padding " +
                        std::to_string(pad_rows) + "x" + std::to_string(pad_cols));
    }
    params_.assign(dof(rows, cols, variant), 0.0);
  }

  /// Number of free cells: dr − r(r+1)/2 (full) or dr − r² (reduced).
  static std::size_t dof(std::size_t rows, std::size_t cols, LayoutVariant variant) {
    if (cols > rows) {
      throw DomainError("dof: rank " + std::to_string(cols) + " exceeds " +
                        std::to_string(rows));
    }
    return variant == LayoutVariant::Full ? rows * cols - cols * (cols + 1) / 2
                                          : rows * cols - cols * cols;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t pad_rows() const noexcept { return pad_rows_; }
  std::size_t pad_cols() const noexcept { return pad_cols_; }
  bool padded() const noexcept { return pad_rows_ != rows_ || pad_cols_ != cols_; }
  LayoutVariant variant() const noexcept { return variant_; }
  std::size_t dof() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Whether cell (i, j) (0-based, padded coordinates) holds a free scalar.
  bool is_free(std::size_t i, std::size_t j) const noexcept {
    if (j >= cols_ || i >= rows_ || i <= j) return false;
    return variant_ == LayoutVariant::Full || i >= cols_;
  }

  /// The padded cell matrix with structural zeros and ones filled in.
  /// Free cells are read column by column, top to bottom.
  Matrix cells() const {
    Matrix h(pad_rows_, pad_cols_);
    std::size_t k = 0;
    for (std::size_t j = 0; j < pad_cols_; ++j) {
      h(j, j) = 1.0;
      for (std::size_t i = j + 1; i < pad_rows_; ++i) {
        if (is_free(i, j)) h(i, j) = params_[k++];
      }
    }
    return h;
  }

  bool operator==(const HouseholderLayout&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0, pad_rows_ = 0, pad_cols_ = 0;
  LayoutVariant variant_ = LayoutVariant::Full;
  std::vector<double> params_;
};

namespace detail {

/// Unit reflector vectors from a cell matrix. Column j is read from row j
/// downward; the structural diagonal keeps every norm ≥ 1.
inline Matrix normalize_reflectors(const Matrix& cells, std::vector<double>* norms = nullptr) {
  Matrix u(cells.rows(), cells.cols());
  if (norms) norms->assign(cells.cols(), 0.0);
  for (std::size_t j = 0; j < cells.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = j; i < cells.rows(); ++i) s += cells(i, j) * cells(i, j);
    const double n = std::sqrt(s);
    if (norms) (*norms)[j] = n;
    for (std::size_t i = j; i < cells.rows(); ++i) u(i, j) = cells(i, j) / n;
  }
  return u;
}

}  // namespace detail

/// Householder product of an arbitrary cell matrix (entries above the
/// diagonal are ignored). Returns the full d_pad×r_pad product.
inline Matrix decode_cells(const Matrix& cells) {
  const Matrix u = detail::normalize_reflectors(cells);
  return form_q(u);
}

/// Orthonormal d×r frame of a layout.
inline Matrix decode(const HouseholderLayout& layout) {
  Matrix q = decode_cells(layout.cells());
  return layout.padded() ? q.block(layout.rows(), layout.cols()) : q;
}

/// Decodes layouts sharing the same padded size in lockstep over the
/// reflector index. Each result equals `decode` of the same layout bit for bit.
inline std::vector<Matrix> decode_batch(std::span<const HouseholderLayout> layouts) {
  std::vector<Matrix> out;
  if (layouts.empty()) return out;
  const std::size_t pr = layouts[0].pad_rows(), pc = layouts[0].pad_cols();
  std::vector<Matrix> reflectors;
  reflectors.reserve(layouts.size());
  for (std::size_t k = 0; k < layouts.size(); ++k) {
    if (layouts[k].pad_rows() != pr || layouts[k].pad_cols() != pc) {
      throw BatchError("decode_batch: item " + std::to_string(k) + " padded to " +
                       std::to_string(layouts[k].pad_rows()) + "x" +
                       std::to_string(layouts[k].pad_cols()) + ", batch uses " +
                       std::to_string(pr) + "x" + std::to_string(pc));
    }
    reflectors.push_back(detail::normalize_reflectors(layouts[k].cells()));
    out.push_back(Matrix::identity(pr, pc));
  }
  for (std::size_t j = pc; j-- > 0;) {
    for (std::size_t k = 0; k < layouts.size(); ++k)
      apply_reflector(reflectors[k], j, j, out[k]);
  }
  for (std::size_t k = 0; k < layouts.size(); ++k) {
    if (layouts[k].padded()) out[k] = out[k].block(layouts[k].rows(), layouts[k].cols());
  }
  return out;
}

/// Result of encoding a frame: decode(layout) · diag(signs) reproduces it.
struct EncodedFrame {
  HouseholderLayout layout;
  std::vector<double> signs;  // entries in {−1, +1}
};

inline bool is_orthonormal(const Matrix& q, double tol) {
  return orthonormality_residual(q) <= tol;
}

/// Frame -> layout. Runs Householder QR; R of an orthonormal frame is
/// diagonal with ±1 entries, returned as `signs`. Each reflector is rescaled
/// so that its diagonal cell is exactly 1.
///
/// With `LayoutVariant::Reduced` the frame's leading block must already be
/// upper triangular; the pinned cells are then dropped.
inline EncodedFrame encode(const Matrix& q, LayoutVariant variant = LayoutVariant::Full) {
  const std::size_t d = q.rows(), r = q.cols();
  if (r > d) throw DomainError("encode: frame has more columns than rows");
  if (!is_orthonormal(q, 1e-8)) {
    throw DomainError("encode: frame is not orthonormal (residual " +
                      std::to_string(orthonormality_residual(q)) + ")");
  }
  if (variant == LayoutVariant::Reduced) {
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t i = j + 1; i < r; ++i)
        if (std::abs(q(i, j)) > 1e-8)
          throw DomainError("encode: leading block is not upper triangular");
  }
  const HouseholderQR qr = householder_qr(q);
  EncodedFrame out{HouseholderLayout(d, r, variant), std::vector<double>(r)};
  std::size_t k = 0;
  auto params = out.layout.params();
  for (std::size_t j = 0; j < r; ++j) {
    const double pivot = qr.reflectors(j, j);
    if (std::abs(pivot) < 1e-12) {
      throw EncodeError(j, "encode: column " + std::to_string(j) +
                               " has a vanishing pivot and cannot be normalized");
    }
    for (std::size_t i = j + 1; i < d; ++i) {
      if (out.layout.is_free(i, j)) params[k++] = qr.reflectors(i, j) / pivot;
    }
    out.signs[j] = qr.r(j, j) < 0.0 ? -1.0 : 1.0;
  }
  return out;
}

/// Right-multiplies a frame by an orthogonal r×r matrix so that its leading
/// r×r block becomes upper triangular. Returns the new frame and the factor.
inline std::pair<Matrix, Matrix> canonicalize_upper(const Matrix& q) {
  const std::size_t r = q.cols();
  // With J the reversal permutation: QR of (J B)ᵀ = P T gives B P J upper
  // triangular, B the leading block.
  Matrix jbt(r, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) jbt(j, i) = q(r - 1 - i, j);
  const Matrix p = form_q(householder_qr(jbt).reflectors);
  Matrix o(r, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) o(i, j) = p(i, r - 1 - j);
  Matrix frame = matmul(q, o);
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i = j + 1; i < r; ++i) frame(i, j) = 0.0;
  return {std::move(frame), std::move(o)};
}

/// Frame initialization schemes: truncated identity, QR of a standard normal
/// matrix, or QR of I + α·N.
struct InitScheme {
  enum class Kind { Identity, RandomOrthogonal, NoisyIdentity };
  Kind kind = Kind::NoisyIdentity;
  double alpha = 1e-4;

  static InitScheme identity() { return {Kind::Identity, 0.0}; }
  static InitScheme random_orthogonal() { return {Kind::RandomOrthogonal, 0.0}; }
  static InitScheme noisy_identity(double alpha = 1e-4) {
    return {Kind::NoisyIdentity, alpha};
  }
};

inline Matrix init_frame(InitScheme scheme, std::size_t d, std::size_t r,
                         std::uint64_t seed) {
  if (r > d) throw DomainError("init_frame: rank exceeds rows");
  switch (scheme.kind) {
    case InitScheme::Kind::Identity:
      return Matrix::identity(d, r);
    case InitScheme::Kind::RandomOrthogonal:
      return orthonormalize(random_normal(d, r, seed));
    case InitScheme::Kind::NoisyIdentity:
    default:
      return orthonormalize(Matrix::identity(d, r) + scheme.alpha * random_normal(d, r, seed));
  }
}

/// Initial layout for a d×r frame. Reduced layouts are seeded with the
/// upper-triangular representative of the same column space.
inline EncodedFrame init_layout(InitScheme scheme, std::size_t d, std::size_t r,
                                std::uint64_t seed,
                                LayoutVariant variant = LayoutVariant::Full) {
  Matrix frame = init_frame(scheme, d, r, seed);
  if (variant == LayoutVariant::Reduced && scheme.kind != InitScheme::Kind::Identity)
    frame = canonicalize_upper(frame).first;
  return encode(frame, variant);
}

}  // namespace spectt
