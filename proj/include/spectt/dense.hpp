#pragma once

// Dense row-major tensors and matrices, plus the handful of factorizations
// the parameterizations and their test oracles need.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/error.hpp"

namespace spectt {

using Dims = std::vector<std::size_t>;

inline std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string dims_string(std::span<const std::size_t> dims) {
  std::string s = "(";
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(dims[k]);
  }
  return s + ")";
}

/// Position of a 1-based multi-index in the row-major element order
/// (last index fastest). Returns a 1-based position.
inline std::size_t multi_index(std::span<const std::size_t> dims,
                               std::span<const std::size_t> idx) {
  if (dims.size() != idx.size()) {
    throw ShapeError("multi_index: " + std::to_string(idx.size()) +
                     " indices for " + std::to_string(dims.size()) + " axes");
  }
  std::size_t pos = 0;
  for (std::size_t p = 0; p < dims.size(); ++p) {
    if (idx[p] < 1 || idx[p] > dims[p]) {
      throw RangeError(p, "multi_index: index " + std::to_string(idx[p]) +
                              " out of range on axis " + std::to_string(p) +
                              " of extent " + std::to_string(dims[p]));
    }
    pos = pos * dims[p] + (idx[p] - 1);
  }
  return pos + 1;
}

/// Dense tensor of doubles. Storage order is row-major over `dims`.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Dims dims) : dims_(std::move(dims)) {
    validate_dims();
    data_.assign(product(dims_), 0.0);
  }

  Tensor(Dims dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims();
    if (data_.size() != product(dims_)) {
      throw ShapeError("Tensor: " + std::to_string(data_.size()) +
                       " values for dims " + dims_string(dims_));
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  /// Element access with a 1-based multi-index.
  double at(std::span<const std::size_t> idx) const {
    return data_[multi_index(dims_, idx) - 1];
  }
  double& at(std::span<const std::size_t> idx) {
    return data_[multi_index(dims_, idx) - 1];
  }

  bool operator==(const Tensor&) const = default;

 private:
  void validate_dims() const {
    if (dims_.empty()) throw ShapeError("Tensor: empty dims");
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("Tensor: zero extent in " + dims_string(dims_));
    }
  }

  Dims dims_;
  std::vector<double> data_;
};

/// Metadata-only reshape; the buffer is carried over untouched.
inline Tensor reshape(Tensor t, Dims new_dims) {
  if (product(new_dims) != t.size()) {
    throw ShapeError("reshape: " + dims_string(t.dims()) + " -> " +
                     dims_string(new_dims) + " changes element count");
  }
  return Tensor(std::move(new_dims), std::move(t.values()));
}

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
      throw ShapeError("Matrix: " + std::to_string(data_.size()) +
                       " values for " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  static Matrix identity(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < std::min(rows, cols); ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix identity(std::size_t n) { return identity(n, n); }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  /// Leading rows x cols block.
  Matrix block(std::size_t rows, std::size_t cols) const {
    Matrix b(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) b(i, j) = (*this)(i, j);
    return b;
  }

  Tensor as_tensor() const { return Tensor({rows_, cols_}, data_); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix as_matrix(const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError("as_matrix: tensor of dims " + dims_string(t.dims()));
  }
  return Matrix(t.dims()[0], t.dims()[1], t.values());
}

/// (a, b, c) core -> (a*b, c) matrix; row index fuses the first two axes.
inline Matrix matricize_core(const Tensor& t) {
  if (t.rank() != 3) {
    throw ShapeError("matricize_core: expected 3 axes, got " +
                     dims_string(t.dims()));
  }
  return Matrix(t.dims()[0] * t.dims()[1], t.dims()[2], t.values());
}

// ---------------------------------------------------------------------------
// Basic linear algebra

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

/// aᵀ b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  return c;
}

/// a bᵀ without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

/// a · diag(d)
inline Matrix scale_columns(Matrix a, std::span<const double> d) {
  if (d.size() != a.cols()) throw ShapeError("scale_columns: length mismatch");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) *= d[j];
  return a;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("matrix difference: shape mismatch");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.values()[k] -= b.values()[k];
  return c;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("matrix sum: shape mismatch");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.values()[k] += b.values()[k];
  return c;
}

inline Matrix operator*(double s, Matrix a) {
  for (double& v : a.values()) v *= s;
  return a;
}

inline double frobenius_norm(std::span<const double> v) {
  // Scaled by the largest magnitude.
  double scale = 0.0;
  for (double x : v) {
    if (std::isnan(x)) return x;
    scale = std::max(scale, std::abs(x));
  }
  if (scale == 0.0 || std::isinf(scale)) return scale;
  double s = 0.0;
  for (double x : v) s += (x / scale) * (x / scale);
  return scale * std::sqrt(s);
}
inline double frobenius_norm(const Matrix& m) { return frobenius_norm(m.data()); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// ‖aᵀa − I‖_F
inline double orthonormality_residual(const Matrix& a) {
  Matrix g = matmul_tn(a, a);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return frobenius_norm(g);
}

inline Matrix random_normal(std::size_t rows, std::size_t cols,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Householder QR

/// Reflectors stored as unit column vectors (zero above their pivot row) and
/// the upper-triangular factor. A zero column means "no reflection"; it is
/// produced when the remaining sub-column is exactly zero.
struct HouseholderQR {
  Matrix reflectors;  // d x r
  Matrix r;           // r x r
};

/// y <- (I - 2uuᵀ) y for every column of y, u taken from column j of `u`.
/// Only rows >= `from` of u may be nonzero.
inline void apply_reflector(const Matrix& u, std::size_t j, std::size_t from,
                            Matrix& y) {
  for (std::size_t c = 0; c < y.cols(); ++c) {
    double w = 0.0;
    for (std::size_t i = from; i < y.rows(); ++i) w += u(i, j) * y(i, c);
    if (w == 0.0) continue;
    const double w2 = 2.0 * w;
    for (std::size_t i = from; i < y.rows(); ++i) y(i, c) -= w2 * u(i, j);
  }
}

/// QR with the sign choice R_jj = −sign(x_1)·‖x‖
/// (sign(0) taken as +1).
inline HouseholderQR householder_qr(const Matrix& m) {
  const std::size_t d = m.rows();
  const std::size_t r = m.cols();
  if (d < r) {
    throw ShapeError("householder_qr: need rows >= cols, got " +
                     std::to_string(d) + "x" + std::to_string(r));
  }
  Matrix a = m;
  Matrix u(d, r);
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<double> x(d - j);
    for (std::size_t i = j; i < d; ++i) x[i - j] = a(i, j);
    const double norm = frobenius_norm(x);
    if (norm == 0.0) continue;  // identity reflector
    const double alpha = x[0] >= 0.0 ? -norm : norm;
    x[0] -= alpha;
    const double vnorm = frobenius_norm(x);
    for (std::size_t i = j; i < d; ++i) u(i, j) = x[i - j] / vnorm;
    // Apply to the trailing columns only; column j becomes alpha·e_j.
    for (std::size_t c = j; c < r; ++c) {
      double w = 0.0;
      for (std::size_t i = j; i < d; ++i) w += u(i, j) * a(i, c);
      for (std::size_t i = j; i < d; ++i) a(i, c) -= 2.0 * w * u(i, j);
    }
    a(j, j) = alpha;
    for (std::size_t i = j + 1; i < d; ++i) a(i, j) = 0.0;
  }
  HouseholderQR out{std::move(u), Matrix(r, r)};
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i; j < r; ++j) out.r(i, j) = a(i, j);
  return out;
}

/// Explicit Q = H_1 ⋯ H_r I_{d×r}.
inline Matrix form_q(const Matrix& reflectors) {
  Matrix q = Matrix::identity(reflectors.rows(), reflectors.cols());
  for (std::size_t j = reflectors.cols(); j-- > 0;)
    apply_reflector(reflectors, j, j, q);
  return q;
}

/// Orthonormal basis of the column space of m with the positive-diagonal R
/// convention, i.e. the Q of the unique QR with R_jj > 0 for full-rank m.
inline Matrix orthonormalize(const Matrix& m) {
  HouseholderQR qr = householder_qr(m);
  Matrix q = form_q(qr.reflectors);
  for (std::size_t j = 0; j < q.cols(); ++j) {
    if (qr.r(j, j) < 0.0) {
      for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) = -q(i, j);
    }
  }
  return q;
}

// ---------------------------------------------------------------------------
// Singular values

/// Largest singular value by power iteration on mᵀm. The start vector is
/// drawn from `seed`; iteration stops when the estimate changes by less than
/// 1e-12 relative, or after 500 iterations.
inline double power_iteration_sigma_max(const Matrix& m, std::uint64_t seed) {
  if (frobenius_norm(m) == 0.0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(m.cols());
  for (double& x : v) x = normal(rng);
  double nv = frobenius_norm(v);
  for (double& x : v) x /= nv;

  std::vector<double> w(m.rows());
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * v[j];
      w[i] = s;
    }
    const double next = frobenius_norm(w);
    if (next == 0.0) {
      // Start vector in the null space; restart from a fresh draw.
      for (double& x : v) x = normal(rng);
      nv = frobenius_norm(v);
      for (double& x : v) x /= nv;
      continue;
    }
    for (std::size_t j = 0; j < m.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * w[i];
      v[j] = s;
    }
    nv = frobenius_norm(v);
    for (double& x : v) x /= nv;
    const bool done = it > 0 && std::abs(next - sigma) < 1e-12 * next;
    sigma = next;
    if (done) break;
  }
  return sigma;
}

/// Thin SVD m = U diag(sigma) Vᵀ with k = min(rows, cols) columns.
struct Svd {
  Matrix u;                   // rows x k
  std::vector<double> sigma;  // k, descending, non-negative
  Matrix v;                   // cols x k
};

namespace detail {

/// Extends the columns of q flagged in `fill` to an orthonormal set, using
/// standard basis vectors as candidates.
inline void complete_orthonormal(Matrix& q, const std::vector<bool>& fill) {
  const std::size_t n = q.rows();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < q.cols(); ++j) {
    if (!fill[j]) continue;
    while (candidate < n) {
      std::vector<double> c(n, 0.0);
      c[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < q.cols(); ++k) {
          if (k == j || (fill[k] && k > j)) continue;
          double p = 0.0;
          for (std::size_t i = 0; i < n; ++i) p += q(i, k) * c[i];
          for (std::size_t i = 0; i < n; ++i) c[i] -= p * q(i, k);
        }
      }
      const double nc = frobenius_norm(c);
      if (nc > 0.5) {
        for (std::size_t i = 0; i < n; ++i) q(i, j) = c[i] / nc;
        break;
      }
    }
  }
}

inline Svd jacobi_svd_tall(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  Matrix a = m;
  Matrix v = Matrix::identity(n);
  constexpr double tol = 1e-12;
  constexpr int max_sweeps = 30;

  bool converged = n < 2;
  int sweep = 0;
  while (!converged && sweep < max_sweeps) {
    ++sweep;
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += a(i, p) * a(i, p);
          beta += a(i, q) * a(i, q);
          gamma += a(i, p) * a(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta))
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw NumericError("svd_full: one-sided Jacobi did not converge after " +
                       std::to_string(sweep) + " sweeps");
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = frobenius_norm(a.column(j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(rows, n), std::vector<double>(n), Matrix(n, n)};
  const double smax = norms.empty() ? 0.0 : norms[order[0]];
  const double floor = smax * 1e-14 * static_cast<double>(std::max(rows, n));
  std::vector<bool> fill(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    if (norms[j] <= floor || norms[j] == 0.0) {
      fill[k] = true;
    } else {
      for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = a(i, j) / norms[j];
    }
  }
  if (std::find(fill.begin(), fill.end(), true) != fill.end())
    complete_orthonormal(out.u, fill);
  return out;
}

}  // namespace detail

/// Thin SVD by one-sided Jacobi (tolerance 1e-12, at most 30 sweeps).
/// Singular vectors of zero singular values are completed to an orthonormal
/// set.
inline Svd svd_full(const Matrix& m) {
  for (double x : m.values()) {
    if (!std::isfinite(x)) throw NumericError("svd_full: non-finite entry");
  }
  if (m.rows() >= m.cols()) return detail::jacobi_svd_tall(m);
  Svd t = detail::jacobi_svd_tall(transpose(m));
  return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

}  // namespace spectt
