#pragma once

// Reverse-mode gradients of the parameterization pipeline
//
//   layout cells -> Householder frames -> (TT chains) -> W -> loss
//
// over a fixed set of primitives, plus central finite differences and a
// gradcheck harness built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"
#include "spectt/householder.hpp"
#include "spectt/spectral.hpp"
#include "spectt/sttp.hpp"
#include "spectt/svdp.hpp"
#include "spectt/tensor_train.hpp"

namespace spectt {

// ---------------------------------------------------------------------------
// Primitives

/// Decode of one layout with the intermediate products Y_j = H_j ⋯ H_r I
/// saved. value() equals decode() bit for bit.
class FrameTape {
 public:
  explicit FrameTape(const HouseholderLayout& layout)
      : layout_(layout), cells_(unpadded_cells(layout)) {
    u_ = detail::normalize_reflectors(cells_, &norms_);
    const std::size_t r = layout.cols();
    ys_.resize(r + 1);
    ys_[r] = Matrix::identity(layout.rows(), r);
    for (std::size_t j = r; j-- > 0;) {
      ys_[j] = ys_[j + 1];
      apply_reflector(u_, j, j, ys_[j]);
    }
  }

  const Matrix& value() const noexcept { return ys_[0]; }
  const HouseholderLayout& layout() const noexcept { return layout_; }

  /// Gradient w.r.t. the layout's free cells, in params() order.
  std::vector<double> vjp(const Matrix& qbar) const {
    const std::size_t d = layout_.rows(), r = layout_.cols();
    if (qbar.rows() != d || qbar.cols() != r)
      throw ShapeError("FrameTape::vjp: upstream " + std::to_string(qbar.rows()) + "x" +
                       std::to_string(qbar.cols()) + ", frame " + std::to_string(d) + "x" +
                       std::to_string(r));
    Matrix g = qbar;  // gradient w.r.t. Y_j
    Matrix hbar(d, r);
    std::vector<double> w(r), gu(r), ubar(d);
    for (std::size_t j = 0; j < r; ++j) {
      const Matrix& y = ys_[j + 1];
      // w = uᵀY, gu = Gᵀu
      for (std::size_t c = 0; c < r; ++c) {
        double a = 0.0, b = 0.0;
        for (std::size_t i = j; i < d; ++i) {
          a += u_(i, j) * y(i, c);
          b += u_(i, j) * g(i, c);
        }
        w[c] = a;
        gu[c] = b;
      }
      // ū = −2(G w + Y gu), restricted to rows >= j.
      for (std::size_t i = j; i < d; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < r; ++c) s += g(i, c) * w[c] + y(i, c) * gu[c];
        ubar[i] = -2.0 * s;
      }
      // Through u = h/‖h‖.
      double uu = 0.0;
      for (std::size_t i = j; i < d; ++i) uu += u_(i, j) * ubar[i];
      for (std::size_t i = j; i < d; ++i) hbar(i, j) = (ubar[i] - u_(i, j) * uu) / norms_[j];
      // G <- H G
      for (std::size_t c = 0; c < r; ++c)
        for (std::size_t i = j; i < d; ++i) g(i, c) -= 2.0 * u_(i, j) * gu[c];
    }
    std::vector<double> out;
    out.reserve(layout_.dof());
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t i = j + 1; i < d; ++i)
        if (layout_.is_free(i, j)) out.push_back(hbar(i, j));
    return out;
  }

 private:
  static Matrix unpadded_cells(const HouseholderLayout& l) {
    return l.padded() ? l.cells().block(l.rows(), l.cols()) : l.cells();
  }

  HouseholderLayout layout_;
  Matrix cells_;
  Matrix u_;
  std::vector<double> norms_;
  std::vector<Matrix> ys_;
};

/// chain_matrix with every partial product saved.
class ChainTape {
 public:
  explicit ChainTape(std::vector<TTCore> cores) : cores_(std::move(cores)) {
    detail::check_junctions(cores_);
    if (cores_.front().r_left() != 1) throw ShapeError("ChainTape: leading rank must be 1");
    acc_.push_back(matricize_core(cores_.front().data));
    for (std::size_t k = 1; k < cores_.size(); ++k) {
      const TTCore& c = cores_[k];
      Matrix next = matmul(acc_.back(), Matrix(c.r_left(), c.n() * c.r_right(), c.data.values()));
      acc_.push_back(Matrix(acc_.back().rows() * c.n(), c.r_right(), std::move(next.values())));
    }
  }

  const Matrix& value() const noexcept { return acc_.back(); }

  /// Gradients w.r.t. each core, as matrices of the core matricization shape.
  std::vector<Matrix> vjp(const Matrix& abar) const {
    const Matrix& out = acc_.back();
    if (abar.rows() != out.rows() || abar.cols() != out.cols())
      throw ShapeError("ChainTape::vjp: upstream dims mismatch");
    std::vector<Matrix> grads(cores_.size());
    Matrix g = abar;
    for (std::size_t k = cores_.size(); k-- > 1;) {
      const TTCore& c = cores_[k];
      const Matrix& prev = acc_[k - 1];
      const Matrix b(prev.rows(), c.n() * c.r_right(), g.values());
      const Matrix cm(c.r_left(), c.n() * c.r_right(), c.data.values());
      const Matrix gc = matmul_tn(prev, b);
      grads[k] = Matrix(c.r_left() * c.n(), c.r_right(), gc.values());
      g = matmul_nt(b, cm);
    }
    grads[0] = g;
    return grads;
  }

 private:
  std::vector<TTCore> cores_;
  std::vector<Matrix> acc_;
};

/// s̄ from σ̄ through σ = signs ⊙ s / |s_m|, m the smallest index of maximal
/// |s_j|. At ties the gradient is attributed to that index.
inline std::vector<double> normalize_vjp(const SpectrumParams& sp,
                                         std::span<const double> sigma_bar) {
  const std::size_t r = sp.s.size();
  if (sigma_bar.size() != r) throw ShapeError("normalize_vjp: length mismatch");
  const std::size_t m = argmax_abs(sp.s);
  const double n = std::abs(sp.s[m]);
  if (n == 0.0) throw DomainError("normalize_vjp: degenerate spectrum, s = 0");
  std::vector<double> out(r);
  double acc = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = sp.signs[i] * sigma_bar[i] / n;
    acc += sp.signs[i] * sigma_bar[i] * sp.s[i];
  }
  out[m] -= (sp.s[m] < 0.0 ? -1.0 : 1.0) * acc / (n * n);
  return out;
}

/// Value and σ-gradient of λ · (−Σ log max(|σ_i|, eps)).
inline double penalty_value_grad(std::span<const double> sigma, double lambda,
                                 std::span<double> sigma_bar, double eps = 1e-12) {
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double a = std::abs(sigma[i]);
    if (a > eps) sigma_bar[i] += -lambda * (sigma[i] < 0.0 ? -1.0 : 1.0) / a;
  }
  return lambda * d_optimal_penalty_floored(sigma, eps);
}

// ---------------------------------------------------------------------------
// Scheme tapes: forward W = U Σ Vᵀ with everything needed for the reverse pass.

class SvdpTape {
 public:
  explicit SvdpTape(const SvdpParams& p)
      : p_(p), u_(p.u), v_(p.v), sigma_(materialize_sigma(p.spectrum)) {
    validate(p, false);
    w_ = matmul_nt(scale_columns(u_.value(), sigma_), v_.value());
  }

  const Matrix& w() const noexcept { return w_; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  std::size_t dof() const noexcept { return p_.dof(); }
  const SpectrumParams& spectrum() const noexcept { return p_.spectrum; }

  /// Gradient of ⟨wbar, W⟩ + ⟨sigma_bar, σ⟩ w.r.t. flat() parameters.
  std::vector<double> vjp(const Matrix& wbar, std::span<const double> sigma_bar = {}) const {
    check_upstream(wbar, sigma_bar);
    const Matrix& u = u_.value();
    const Matrix& v = v_.value();
    const Matrix wv = matmul(wbar, v);      // d_out × r
    const Matrix wtu = matmul_tn(wbar, u);  // d_in × r
    std::vector<double> out = u_.vjp(scale_columns(wv, sigma_));
    const std::vector<double> gv = v_.vjp(scale_columns(wtu, sigma_));
    out.insert(out.end(), gv.begin(), gv.end());
    if (p_.spectrum.learned()) {
      std::vector<double> sb(p_.rank, 0.0);
      for (std::size_t i = 0; i < p_.rank; ++i) {
        double d = 0.0;
        for (std::size_t a = 0; a < u.rows(); ++a) d += u(a, i) * wv(a, i);
        sb[i] = d + (sigma_bar.empty() ? 0.0 : sigma_bar[i]);
      }
      const std::vector<double> gs = normalize_vjp(p_.spectrum, sb);
      out.insert(out.end(), gs.begin(), gs.end());
    }
    return out;
  }

 private:
  void check_upstream(const Matrix& wbar, std::span<const double> sigma_bar) const {
    if (wbar.rows() != w_.rows() || wbar.cols() != w_.cols())
      throw ShapeError("vjp: upstream is " + std::to_string(wbar.rows()) + "x" +
                       std::to_string(wbar.cols()) + ", output is " + std::to_string(w_.rows()) +
                       "x" + std::to_string(w_.cols()));
    if (!sigma_bar.empty() && sigma_bar.size() != sigma_.size())
      throw ShapeError("vjp: sigma upstream length mismatch");
  }

  SvdpParams p_;
  FrameTape u_, v_;
  std::vector<double> sigma_;
  Matrix w_;
};

class SttpTape {
 public:
  explicit SttpTape(const SttpParams& p) : p_(p), sigma_(materialize_sigma(p.spectrum)) {
    validate(p);
    for (const auto& c : p.cores) frames_.emplace_back(c);
    std::vector<Matrix> f;
    for (const auto& t : frames_) f.push_back(t.value());
    u_.emplace(u_cores(p.shape, f));
    v_.emplace(v_cores(p.shape, f));
    perm_ = in_column_permutation(p.shape.in_fac);
    vb_ = permute_rows(v_->value(), perm_);
    w_ = matmul_nt(scale_columns(u_->value(), sigma_), vb_);
  }

  const Matrix& w() const noexcept { return w_; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  std::size_t dof() const noexcept { return p_.dof(); }
  const SpectrumParams& spectrum() const noexcept { return p_.spectrum; }

  std::vector<double> vjp(const Matrix& wbar, std::span<const double> sigma_bar = {}) const {
    if (wbar.rows() != w_.rows() || wbar.cols() != w_.cols())
      throw ShapeError("vjp: upstream is " + std::to_string(wbar.rows()) + "x" +
                       std::to_string(wbar.cols()) + ", output is " + std::to_string(w_.rows()) +
                       "x" + std::to_string(w_.cols()));
    if (!sigma_bar.empty() && sigma_bar.size() != sigma_.size())
      throw ShapeError("vjp: sigma upstream length mismatch");
    const Matrix& u = u_->value();
    const Matrix wv = matmul(wbar, vb_);
    const Matrix wtu = matmul_tn(wbar, u);
    const Matrix vb_bar = scale_columns(wtu, sigma_);
    Matrix vnat_bar(vb_bar.rows(), vb_bar.cols());
    for (std::size_t c = 0; c < perm_.size(); ++c)
      for (std::size_t j = 0; j < vb_bar.cols(); ++j) vnat_bar(perm_[c], j) = vb_bar(c, j);
    const std::vector<Matrix> gu = u_->vjp(scale_columns(wv, sigma_));
    const std::vector<Matrix> gv = v_->vjp(vnat_bar);

    const std::size_t dout = p_.shape.out_modes(), D = p_.shape.num_cores();
    std::vector<double> out;
    out.reserve(p_.dof());
    for (std::size_t k = 0; k < D; ++k) {
      // v_cores lists chain cores D−1 down to dout.
      const Matrix& g = k < dout ? gu[k] : gv[D - 1 - k];
      const std::vector<double> gk = frames_[k].vjp(g);
      out.insert(out.end(), gk.begin(), gk.end());
    }
    if (p_.spectrum.learned()) {
      std::vector<double> sb(p_.shape.r, 0.0);
      for (std::size_t i = 0; i < sb.size(); ++i) {
        double d = 0.0;
        for (std::size_t a = 0; a < u.rows(); ++a) d += u(a, i) * wv(a, i);
        sb[i] = d + (sigma_bar.empty() ? 0.0 : sigma_bar[i]);
      }
      const std::vector<double> gs = normalize_vjp(p_.spectrum, sb);
      out.insert(out.end(), gs.begin(), gs.end());
    }
    return out;
  }

 private:
  SttpParams p_;
  std::vector<FrameTape> frames_;
  std::optional<ChainTape> u_, v_;
  std::vector<std::size_t> perm_;
  Matrix vb_;
  std::vector<double> sigma_;
  Matrix w_;
};

inline SvdpTape make_tape(const SvdpParams& p) { return SvdpTape(p); }
inline SttpTape make_tape(const SttpParams& p) { return SttpTape(p); }

// ---------------------------------------------------------------------------
// Losses

/// ½‖W − target‖² (when a target is set) + ⟨linear, W⟩ (when set), plus
/// λ·(−Σ log|σ|) for a LearnedRegularized spectrum with λ from the params.
struct LossSpec {
  std::optional<Matrix> target;
  std::optional<Matrix> linear;

  static LossSpec frobenius(Matrix t) { return {std::move(t), std::nullopt}; }
  static LossSpec inner(Matrix g) { return {std::nullopt, std::move(g)}; }
};

struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

template <class Tape>
ValueGrad tape_value_and_grad(const Tape& tape, const LossSpec& loss) {
  const Matrix& w = tape.w();
  Matrix wbar(w.rows(), w.cols());
  double value = 0.0;
  if (loss.target) {
    const Matrix diff = w - *loss.target;
    const double f = frobenius_norm(diff);
    value += 0.5 * f * f;
    wbar = wbar + diff;
  }
  if (loss.linear) {
    value += dot(loss.linear->data(), w.data());
    wbar = wbar + *loss.linear;
  }
  std::vector<double> sb(tape.sigma().size(), 0.0);
  const SpectrumParams& sp = tape.spectrum();
  if (sp.mode == SpectrumMode::LearnedRegularized && sp.lambda != 0.0)
    value += penalty_value_grad(tape.sigma(), sp.lambda, sb);
  return {value, tape.vjp(wbar, sb)};
}

template <class Params>
ValueGrad value_and_grad(const Params& p, const LossSpec& loss) {
  return tape_value_and_grad(make_tape(p), loss);
}

template <class Params>
double loss_value(const Params& p, const LossSpec& loss) {
  const auto tape = make_tape(p);
  const Matrix& w = tape.w();
  double value = 0.0;
  if (loss.target) {
    const double f = frobenius_norm(w - *loss.target);
    value += 0.5 * f * f;
  }
  if (loss.linear) value += dot(loss.linear->data(), w.data());
  const SpectrumParams& sp = tape.spectrum();
  if (sp.mode == SpectrumMode::LearnedRegularized && sp.lambda != 0.0)
    value += sp.lambda * d_optimal_penalty_floored(tape.sigma());
  return value;
}

// ---------------------------------------------------------------------------
// Finite differences

inline constexpr double kFdStep = 1e-6;

/// Central differences with h_i = 1e-6 · max(1, |θ_i|).
inline std::vector<double> fd_grad(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> theta) {
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = kFdStep * std::max(1.0, std::abs(theta[i]));
    x[i] = theta[i] + h;
    const double fp = f(x);
    x[i] = theta[i] - h;
    const double fm = f(x);
    x[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("fd_grad: non-finite value probing coordinate " + std::to_string(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t grad_size = 0;
  bool skipped_tie = false;  // ‖s‖_∞ attained twice, not differentiable
  bool passed = false;
};

inline constexpr double kGradcheckTol = 1e-6;

/// Compares value_and_grad against fd_grad. Error is measured as
/// max_i |g_i − fd_i| / max(1, ‖g‖_∞).
template <class Params>
GradcheckReport gradcheck(const Params& p, const LossSpec& loss) {
  GradcheckReport rep;
  const ValueGrad vg = value_and_grad(p, loss);
  rep.grad_size = vg.grad.size();
  if (p.spectrum.learned() && has_max_tie(p.spectrum.s)) {
    rep.skipped_tie = true;
    rep.passed = true;
    return rep;
  }
  const std::vector<double> theta = p.flat();
  Params probe = p;
  const auto f = [&](std::span<const double> t) {
    probe.assign(t);
    return loss_value(probe, loss);
  };
  const std::vector<double> fd = fd_grad(f, theta);
  double scale = 1.0;
  for (double g : vg.grad) scale = std::max(scale, std::abs(g));
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double e = std::abs(vg.grad[i] - fd[i]) / scale;
    if (e > rep.max_rel_error) {
      rep.max_rel_error = e;
      rep.worst_coordinate = i;
    }
  }
  rep.passed = rep.max_rel_error <= kGradcheckTol;
  return rep;
}

}  // namespace spectt
