#pragma once

// Slow reference implementations used only by the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "spectt/spectt.hpp"

namespace oracle {

using spectt::Dims;
using spectt::Matrix;
using spectt::Tensor;

/// Explicit d×d reflectors multiplied into the truncated identity.
inline Matrix householder_product(const Matrix& cells, std::size_t rows, std::size_t cols) {
  Matrix q = Matrix::identity(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    std::vector<double> h(rows, 0.0);
    double n2 = 0.0;
    for (std::size_t i = j; i < rows; ++i) {
      h[i] = cells(i, j);
      n2 += h[i] * h[i];
    }
    Matrix hm = Matrix::identity(rows);
    for (std::size_t a = 0; a < rows; ++a)
      for (std::size_t b = 0; b < rows; ++b) hm(a, b) -= 2.0 * h[a] * h[b] / n2;
    q = spectt::matmul(q, hm);
  }
  return q.block(rows, cols);
}

/// Free cells of a d×r layout, by enumerating its mask.
inline std::size_t count_free_cells(std::size_t d, std::size_t r, bool reduced) {
  std::size_t n = 0;
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i = 0; i < d; ++i) {
      const bool below = i > j;
      const bool pinned = reduced && i < r;
      if (below && !pinned) ++n;
    }
  return n;
}

inline std::vector<std::size_t> prime_factors(std::size_t d) {
  std::vector<std::size_t> f;
  for (std::size_t p = 2; d > 1; ++p)
    while (d % p == 0) {
      f.push_back(p);
      d /= p;
    }
  return f;
}

/// Element-wise chain product: A[i_1..i_D] = Σ_β Π_k C_k[β_{k−1}, i_k, β_k].
inline Tensor tt_brute_force(const std::vector<spectt::TTCore>& cores) {
  Dims dims;
  for (const auto& c : cores) dims.push_back(c.n());
  Tensor out(dims);
  const std::size_t D = cores.size();
  std::vector<std::size_t> idx(D, 0);
  for (std::size_t pos = 0; pos < out.size(); ++pos) {
    // Sum over all bond assignments by explicit enumeration.
    std::vector<std::size_t> beta(D + 1, 0);
    double total = 0.0;
    while (true) {
      double prod = 1.0;
      for (std::size_t k = 0; k < D; ++k) prod *= cores[k](beta[k], idx[k], beta[k + 1]);
      total += prod;
      std::size_t k = D;
      bool done = true;
      while (k-- > 1) {
        if (++beta[k] < cores[k].r_left()) {
          done = false;
          break;
        }
        beta[k] = 0;
      }
      if (done) break;
    }
    out[pos] = total;
    for (std::size_t k = D; k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

/// Full contraction of a diagram by summing over every label assignment.
inline Tensor diagram_brute_force(const spectt::TensorDiagram& g,
                                  const std::vector<Tensor>& data) {
  const auto lab = g.axis_labels();
  const auto sizes = g.label_sizes();
  const std::size_t L = sizes.size();
  const std::size_t E = g.edges().size();
  Dims out_dims = g.output_dims();
  Tensor out(out_dims.empty() ? Dims{1} : out_dims);
  std::vector<std::size_t> val(L, 0);
  while (true) {
    double prod = 1.0;
    for (std::size_t k = 0; k < g.nodes().size(); ++k) {
      const auto& node = g.nodes()[k];
      if (node.diagonal) {
        const std::size_t a = val[lab[k][0]], b = val[lab[k][1]];
        prod *= a == b ? data[k][a] : 0.0;
      } else {
        std::size_t off = 0;
        for (std::size_t ax = 0; ax < node.dims.size(); ++ax)
          off = off * node.dims[ax] + val[lab[k][ax]];
        prod *= data[k][off];
      }
    }
    std::size_t off = 0;
    for (std::size_t o = 0; o < g.open_legs().size(); ++o) off = off * sizes[E + o] + val[E + o];
    out[off] += prod;
    std::size_t k = L;
    bool done = true;
    while (k-- > 0) {
      if (++val[k] < sizes[k]) {
        done = false;
        break;
      }
      val[k] = 0;
    }
    if (done) break;
  }
  return out;
}

/// Minimum cost over every sequence of pairwise contractions, enumerated
/// exhaustively. Operands are tracked as (label multiset, is-bare-diagonal).
inline std::uint64_t exhaustive_min_cost(const spectt::TensorDiagram& g) {
  const auto lab = g.axis_labels();
  const auto sizes = g.label_sizes();
  struct Op {
    std::set<std::size_t> legs;  // open labels of the operand
    bool diag = false;
  };
  std::vector<Op> ops;
  for (std::size_t k = 0; k < g.nodes().size(); ++k)
    ops.push_back({std::set<std::size_t>(lab[k].begin(), lab[k].end()), g.nodes()[k].diagonal});
  auto numel = [&](const std::set<std::size_t>& s) {
    std::uint64_t n = 1;
    for (std::size_t l : s) n *= sizes[l];
    return n;
  };
  std::function<std::uint64_t(std::vector<Op>)> rec = [&](std::vector<Op> cur) -> std::uint64_t {
    if (cur.size() == 1) return 0;
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t a = 0; a < cur.size(); ++a)
      for (std::size_t b = a + 1; b < cur.size(); ++b) {
        std::set<std::size_t> shared, all, result;
        for (std::size_t l : cur[a].legs) all.insert(l);
        for (std::size_t l : cur[b].legs) all.insert(l);
        for (std::size_t l : cur[a].legs)
          if (cur[b].legs.count(l)) shared.insert(l);
        for (std::size_t l : all)
          if (!shared.count(l)) result.insert(l);
        std::uint64_t c;
        const bool one_diag = cur[a].diag != cur[b].diag;
        const Op& other = cur[a].diag ? cur[b] : cur[a];
        const Op& dg = cur[a].diag ? cur[a] : cur[b];
        if (one_diag && shared.size() == 1) {
          c = numel(other.legs);
        } else if (one_diag && shared.size() == 2) {
          c = 2 * numel(other.legs) / sizes[*dg.legs.begin()];
        } else {
          c = 2 * numel(all);
        }
        std::vector<Op> next;
        for (std::size_t k = 0; k < cur.size(); ++k)
          if (k != a && k != b) next.push_back(cur[k]);
        next.push_back({result, false});
        best = std::min(best, c + rec(next));
      }
    return best;
  };
  return rec(ops);
}

/// Parameter count of a network by hand: Σ(dof + extra) / Σ(numel + extra).
inline double compression_percent(const std::vector<std::array<std::size_t, 4>>& layers) {
  double num = 0, den = 0;
  for (const auto& l : layers) {
    num += static_cast<double>(l[2] + l[3]);
    den += static_cast<double>(l[0] * l[1] + l[3]);
  }
  return 100.0 * num / den;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k)
    m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  return m;
}

inline double rel_error(const Matrix& a, const Matrix& b) {
  const double nb = spectt::frobenius_norm(b);
  return spectt::frobenius_norm(a - b) / (nb == 0.0 ? 1.0 : nb);
}

/// Random layout parameters with entries N(0, scale²).
inline void randomize(spectt::HouseholderLayout& l, std::uint64_t seed, double scale = 1.0) {
  const Matrix m = spectt::random_normal(1, l.dof() == 0 ? 1 : l.dof(), seed);
  for (std::size_t k = 0; k < l.dof(); ++k) l.params()[k] = scale * m.values()[k];
}

inline void randomize(spectt::SvdpParams& p, std::uint64_t seed) {
  randomize(p.u, seed * 3 + 1);
  randomize(p.v, seed * 3 + 2);
  if (p.spectrum.learned()) {
    const Matrix s = spectt::random_normal(1, p.rank, seed * 3 + 3);
    for (std::size_t i = 0; i < p.rank; ++i) p.spectrum.s[i] = s.values()[i];
  }
}

inline void randomize(spectt::SttpParams& p, std::uint64_t seed) {
  for (std::size_t k = 0; k < p.cores.size(); ++k) randomize(p.cores[k], seed * 101 + k + 1);
  if (p.spectrum.learned()) {
    const Matrix s = spectt::random_normal(1, p.shape.r, seed * 101 + 99);
    for (std::size_t i = 0; i < p.shape.r; ++i) p.spectrum.s[i] = s.values()[i];
  }
}

/// Numerical rank of a matrix: singular values above rel·σ_max.
inline std::size_t numerical_rank(const Matrix& m, double rel) {
  const spectt::Svd s = spectt::svd_full(m);
  std::size_t k = 0;
  for (double v : s.sigma)
    if (v > rel * s.sigma[0]) ++k;
  return k;
}

/// Central-difference Jacobian of θ ↦ vec(f(θ)).
template <class F>
Matrix fd_jacobian(F f, std::vector<double> theta, double h = 1e-6) {
  const Matrix base = f(theta);
  Matrix j(base.values().size(), theta.size());
  for (std::size_t c = 0; c < theta.size(); ++c) {
    const double t0 = theta[c];
    theta[c] = t0 + h;
    const Matrix fp = f(theta);
    theta[c] = t0 - h;
    const Matrix fm = f(theta);
    theta[c] = t0;
    for (std::size_t r = 0; r < j.rows(); ++r)
      j(r, c) = (fp.values()[r] - fm.values()[r]) / (2 * h);
  }
  return j;
}

struct RandomDiagram {
  spectt::TensorDiagram g;
  std::vector<Tensor> data;
};

/// Connected diagram of `n` nodes: a random spanning tree, a few extra
/// edges, some open legs and optionally one diagonal node spliced into a
/// tree edge. Extents are 1..3.
inline RandomDiagram random_diagram(std::size_t n, std::uint64_t seed, bool with_diag) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  struct E { std::size_t a, b, size; };
  std::vector<E> edges;
  for (std::size_t k = 1; k < n; ++k) edges.push_back({pick(0, k - 1), k, pick(1, 3)});
  const std::size_t extra = n > 2 ? pick(0, 2) : 0;
  for (std::size_t e = 0; e < extra; ++e) {
    const std::size_t a = pick(0, n - 1), b = pick(0, n - 1);
    if (a != b) edges.push_back({a, b, pick(1, 3)});
  }
  std::vector<std::pair<std::size_t, std::size_t>> open;  // (node, size)
  for (std::size_t k = 0; k < n; ++k)
    if (pick(0, 2) == 0) open.push_back({k, pick(1, 3)});
  std::size_t diag_node = n;
  if (with_diag && n >= 2) {
    const std::size_t e = pick(0, n - 2);
    const E old = edges[e];
    edges[e] = {old.a, n, old.size};
    edges.push_back({n, old.b, old.size});
    diag_node = n;
  }
  const std::size_t total = with_diag && n >= 2 ? n + 1 : n;
  std::vector<Dims> dims(total);
  std::vector<std::pair<std::size_t, std::size_t>> axis_of_edge_a, axis_of_edge_b;
  for (const auto& e : edges) {
    axis_of_edge_a.push_back({e.a, dims[e.a].size()});
    dims[e.a].push_back(e.size);
    axis_of_edge_b.push_back({e.b, dims[e.b].size()});
    dims[e.b].push_back(e.size);
  }
  std::vector<std::pair<std::size_t, std::size_t>> open_axes;
  for (const auto& [node, size] : open) {
    open_axes.push_back({node, dims[node].size()});
    dims[node].push_back(size);
  }
  RandomDiagram out;
  for (std::size_t k = 0; k < total; ++k) {
    if (k == diag_node) {
      out.g.add_diagonal("D", dims[k][0]);
    } else {
      out.g.add_node("T" + std::to_string(k), dims[k]);
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e)
    out.g.connect(axis_of_edge_a[e].first, axis_of_edge_a[e].second, axis_of_edge_b[e].first,
                  axis_of_edge_b[e].second);
  for (const auto& [node, axis] : open_axes) out.g.open(node, axis);
  for (std::size_t k = 0; k < total; ++k) {
    const Dims d = k == diag_node ? Dims{dims[k][0]} : out.g.nodes()[k].dims;
    const Matrix m = spectt::random_normal(1, spectt::product(d), seed * 97 + k);
    out.data.emplace_back(d, m.values());
  }
  return out;
}

inline double max_rel(const Tensor& a, const Tensor& b) {
  double scale = 1.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(b[i]));
    diff = std::max(diff, std::abs(a[i] - b[i]));
  }
  return diff / scale;
}

}  // namespace oracle
