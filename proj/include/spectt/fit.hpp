#pragma once

// Gradient descent with momentum on SVDP/STTP parameters: low-rank matrix
// fitting and a small two-layer regression demo.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spectt/autodiff.hpp"
#include "spectt/dense.hpp"
#include "spectt/error.hpp"
#include "spectt/householder.hpp"
#include "spectt/spectral.hpp"
#include "spectt/sttp.hpp"
#include "spectt/svdp.hpp"

namespace spectt {

enum class Scheme { Svdp, Sttp };

inline const char* to_string(Scheme s) { return s == Scheme::Svdp ? "svdp" : "sttp"; }

using AnyParams = std::variant<SvdpParams, SttpParams>;

inline Matrix assemble_any(const AnyParams& p) {
  return std::visit(
      [](const auto& q) -> Matrix {
        if constexpr (std::is_same_v<std::decay_t<decltype(q)>, SvdpParams>)
          return assemble(q);
        else
          return assemble_sttp(q);
      },
      p);
}

inline const SpectrumParams& spectrum_of(const AnyParams& p) {
  return std::visit([](const auto& q) -> const SpectrumParams& { return q.spectrum; }, p);
}

inline std::size_t dof_of(const AnyParams& p) {
  return std::visit([](const auto& q) { return q.dof(); }, p);
}

inline constexpr double kDivergenceLoss = 1e12;

struct FitConfig {
  Scheme scheme = Scheme::Svdp;
  std::size_t rank = 1;
  SpectrumMode mode = SpectrumMode::Learned;
  double lambda = 0.0;
  std::optional<double> lr;  // defaults: 0.05 svdp, 0.02 sttp
  double momentum = 0.9;
  std::size_t max_steps = 5000;
  double tol = 1e-14;  // on |ΔL| / L
  std::uint64_t seed = 0;
  InitScheme init = InitScheme::noisy_identity();

  double learning_rate() const { return lr ? *lr : (scheme == Scheme::Svdp ? 0.05 : 0.02); }

  void validate() const {
    if (!(learning_rate() > 0.0)) throw DomainError("FitConfig: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw DomainError("FitConfig: momentum must lie in [0, 1)");
    if (!(tol > 0.0)) throw DomainError("FitConfig: tol must be positive");
    if (max_steps < 1) throw DomainError("FitConfig: need at least one step");
    if (lambda < 0.0) throw DomainError("FitConfig: lambda must be non-negative");
  }
};

struct FitResult {
  AnyParams params;           // best-so-far
  std::vector<double> trace;  // loss before each update
  double best_loss = 0.0;
  std::size_t best_step = 0;
};

/// Momentum iteration v <- μv − lr·g, θ <- θ + v from `start`.
template <class Params>
FitResult fit_params(Params start, const LossSpec& loss, const FitConfig& cfg) {
  cfg.validate();
  Params p = std::move(start);
  std::vector<double> theta = p.flat();
  std::vector<double> vel(theta.size(), 0.0);
  FitResult res{p, {}, 0.0, 0};
  const double lr = cfg.learning_rate();
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const ValueGrad vg = value_and_grad(p, loss);
    if (!std::isfinite(vg.value) || vg.value > kDivergenceLoss)
      throw DivergenceError("fit diverged at step " + std::to_string(step) +
                            " (loss " + std::to_string(vg.value) +
                            "); try a smaller learning rate");
    res.trace.push_back(vg.value);
    if (step == 0 || vg.value < res.best_loss) {
      res.best_loss = vg.value;
      res.best_step = step;
      res.params = p;
    }
    if (vg.value == 0.0) break;
    if (step > 0) {
      const double prev = res.trace[step - 1];
      if (std::abs(prev - vg.value) <= cfg.tol * vg.value) break;
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      vel[i] = cfg.momentum * vel[i] - lr * vg.grad[i];
      theta[i] += vel[i];
    }
    p.assign(theta);
  }
  return res;
}

/// Fits ½‖W(θ) − target‖² (+ λ·penalty for the regularized mode) from the
/// configured initialization.
inline FitResult fit_matrix(const Matrix& target, const FitConfig& cfg) {
  cfg.validate();
  for (double v : target.values())
    if (!std::isfinite(v)) throw DomainError("fit_matrix: target has non-finite entries");
  const std::size_t d_out = target.rows(), d_in = target.cols();
  if (cfg.rank == 0 || cfg.rank > rank_cap(d_out, d_in))
    throw DomainError("fit_matrix: rank " + std::to_string(cfg.rank) + " outside [1, " +
                      std::to_string(rank_cap(d_out, d_in)) + "]");
  const LossSpec loss = LossSpec::frobenius(target);
  if (cfg.scheme == Scheme::Svdp)
    return fit_params(make_svdp(d_out, d_in, cfg.rank, cfg.mode, cfg.init, cfg.seed, cfg.lambda),
                      loss, cfg);
  return fit_params(make_sttp(d_out, d_in, cfg.rank, cfg.mode, cfg.init, cfg.seed, cfg.lambda),
                    loss, cfg);
}

/// √(Σ_{i>r} σ_i²), the smallest Frobenius error of a rank-r approximation.
inline double eckart_young_optimum(const Matrix& target, std::size_t r) {
  if (r > rank_cap(target.rows(), target.cols()))
    throw DomainError("eckart_young_optimum: rank exceeds min dims");
  const Svd s = svd_full(target);
  double tail = 0.0;
  for (std::size_t i = r; i < s.sigma.size(); ++i) tail += s.sigma[i] * s.sigma[i];
  return std::sqrt(tail);
}

/// Target scaled to unit spectral norm.
inline Matrix normalize_spectral(const Matrix& m) {
  const Svd s = svd_full(m);
  if (s.sigma.empty() || s.sigma[0] == 0.0)
    throw DomainError("normalize_spectral: zero matrix");
  return (1.0 / s.sigma[0]) * m;
}

// ---------------------------------------------------------------------------
// Demo: y = W2 max(0, W1 x + b1) + b2 with both weights parameterized.

struct DemoConfig {
  Scheme scheme = Scheme::Svdp;
  SpectrumMode mode = SpectrumMode::Learned;
  double lambda = 0.0;
  std::size_t rank = 4;
  std::size_t d_in = 16, hidden = 32, d_out = 8;
  std::size_t samples = 256;
  std::size_t steps = 2000;
  double lr = 0.05;
  double momentum = 0.9;
  double noise = 0.01;
  InitScheme init = InitScheme::noisy_identity();
};

struct DemoStep {
  double loss = 0.0;
  double sigma_max[2] = {0.0, 0.0};    // max |Σ| per layer
  double stable_rank[2] = {0.0, 0.0};  // from Σ
  double lipschitz = 0.0;              // product bound over both layers
};

struct DemoReport {
  std::vector<DemoStep> steps;  // entry k is the state before update k; last entry is final
  double final_loss = 0.0;
  AnyParams layer1, layer2;
};

namespace detail {

inline Matrix normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * n(rng);
  return m;
}

template <class Params>
DemoReport run_demo(Params l1, Params l2, const DemoConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eed5eed5eedULL);
  const std::size_t n = cfg.samples;
  const Matrix x = normal_matrix(cfg.d_in, n, rng);
  // Teacher: unit-spectral-norm weights keep the map 1-Lipschitz.
  const Matrix a1 = normalize_spectral(normal_matrix(cfg.hidden, cfg.d_in, rng));
  const Matrix a2 = normalize_spectral(normal_matrix(cfg.d_out, cfg.hidden, rng));
  const Matrix c1 = normal_matrix(cfg.hidden, 1, rng, 0.1);
  const Matrix c2 = normal_matrix(cfg.d_out, 1, rng, 0.1);
  Matrix t = matmul(a1, x);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) t(i, j) = std::max(0.0, t(i, j) + c1(i, 0));
  t = matmul(a2, t);
  const Matrix noise = normal_matrix(cfg.d_out, n, rng, cfg.noise);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) t(i, j) += c2(i, 0) + noise(i, j);

  std::vector<double> b1(cfg.hidden, 0.0), b2(cfg.d_out, 0.0);
  std::vector<double> th1 = l1.flat(), th2 = l2.flat();
  std::vector<double> v1(th1.size(), 0.0), v2(th2.size(), 0.0);
  std::vector<double> vb1(b1.size(), 0.0), vb2(b2.size(), 0.0);
  DemoReport rep{{}, 0.0, l1, l2};

  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    const auto t1 = make_tape(l1);
    const auto t2 = make_tape(l2);
    Matrix z = matmul(t1.w(), x);
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) z(i, j) += b1[i];
    Matrix h = z;
    for (double& v : h.values()) v = std::max(0.0, v);
    Matrix y = matmul(t2.w(), h);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) y(i, j) += b2[i];
    Matrix ybar = y - t;
    const double fro = frobenius_norm(ybar);
    double loss = 0.5 * fro * fro / static_cast<double>(n);

    std::vector<double> sb1(t1.sigma().size(), 0.0), sb2(t2.sigma().size(), 0.0);
    if (cfg.mode == SpectrumMode::LearnedRegularized && cfg.lambda != 0.0) {
      loss += penalty_value_grad(t1.sigma(), cfg.lambda, sb1);
      loss += penalty_value_grad(t2.sigma(), cfg.lambda, sb2);
    }
    if (!std::isfinite(loss) || loss > kDivergenceLoss)
      throw DivergenceError("demo_train diverged at step " + std::to_string(step) +
                            "; try a smaller learning rate");

    DemoStep rec;
    rec.loss = loss;
    const std::vector<double>* sig[2] = {&t1.sigma(), &t2.sigma()};
    for (int l = 0; l < 2; ++l) {
      double m = 0.0;
      for (double s : *sig[l]) m = std::max(m, std::abs(s));
      rec.sigma_max[l] = m;
      rec.stable_rank[l] = stable_rank(*sig[l]);
    }
    rec.lipschitz = lipschitz_bound(rec.sigma_max);
    rep.steps.push_back(rec);
    rep.final_loss = loss;
    rep.layer1 = l1;
    rep.layer2 = l2;
    if (step == cfg.steps) break;

    for (double& v : ybar.values()) v /= static_cast<double>(n);
    const Matrix w2bar = matmul_nt(ybar, h);
    Matrix hbar = matmul_tn(t2.w(), ybar);
    for (std::size_t k = 0; k < hbar.values().size(); ++k)
      if (z.values()[k] <= 0.0) hbar.values()[k] = 0.0;
    const Matrix w1bar = matmul_nt(hbar, x);
    const std::vector<double> g1 = t1.vjp(w1bar, sb1);
    const std::vector<double> g2 = t2.vjp(w2bar, sb2);
    auto update = [&](std::vector<double>& th, std::vector<double>& vel,
                      const std::vector<double>& g) {
      for (std::size_t i = 0; i < th.size(); ++i) {
        vel[i] = cfg.momentum * vel[i] - cfg.lr * g[i];
        th[i] += vel[i];
      }
    };
    std::vector<double> gb1(b1.size(), 0.0), gb2(b2.size(), 0.0);
    for (std::size_t i = 0; i < b1.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) gb1[i] += hbar(i, j);
    for (std::size_t i = 0; i < b2.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) gb2[i] += ybar(i, j);
    update(th1, v1, g1);
    update(th2, v2, g2);
    update(b1, vb1, gb1);
    update(b2, vb2, gb2);
    l1.assign(th1);
    l2.assign(th2);
  }
  return rep;
}

}  // namespace detail

inline DemoReport demo_train(const DemoConfig& cfg, std::uint64_t seed) {
  if (!(cfg.lr > 0.0)) throw DomainError("demo_train: learning rate must be positive");
  if (cfg.samples == 0 || cfg.steps == 0) throw DomainError("demo_train: empty run");
  const std::uint64_t s1 = seed * 2 + 1, s2 = seed * 2 + 2;
  if (cfg.scheme == Scheme::Svdp)
    return detail::run_demo(
        make_svdp(cfg.hidden, cfg.d_in, cfg.rank, cfg.mode, cfg.init, s1, cfg.lambda),
        make_svdp(cfg.d_out, cfg.hidden, cfg.rank, cfg.mode, cfg.init, s2, cfg.lambda), cfg, seed);
  return detail::run_demo(
      make_sttp(cfg.hidden, cfg.d_in, cfg.rank, cfg.mode, cfg.init, s1, cfg.lambda),
      make_sttp(cfg.d_out, cfg.hidden, cfg.rank, cfg.mode, cfg.init, s2, cfg.lambda), cfg, seed);
}

}  // namespace spectt
