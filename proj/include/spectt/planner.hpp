#pragma once

// Tensor diagrams and FLOP-optimal pairwise contraction plans.
//
// Cost model: contracting two dense operands costs 2·Π(sizes of every
// distinct leg of either operand), one multiply and one add per term. A
// diagonal node (a spectrum Σ) applied to an operand through one shared leg
// is a pure scaling and costs numel(operand).

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"

namespace spectt {

struct DiagramNode {
  std::string name;
  Dims dims;
  bool diagonal = false;  // dims == {r, r}, bound data is the length-r diagonal
};

struct DiagramEdge {
  std::size_t node_a, axis_a, node_b, axis_b;
};

struct DiagramLeg {
  std::size_t node, axis;
};

class TensorDiagram {
 public:
  std::size_t add_node(std::string name, Dims dims) {
    nodes_.push_back({std::move(name), std::move(dims), false});
    return nodes_.size() - 1;
  }

  std::size_t add_diagonal(std::string name, std::size_t r) {
    nodes_.push_back({std::move(name), {r, r}, true});
    return nodes_.size() - 1;
  }

  void connect(std::size_t a, std::size_t axis_a, std::size_t b, std::size_t axis_b) {
    edges_.push_back({a, axis_a, b, axis_b});
  }

  void open(std::size_t node, std::size_t axis) { open_.push_back({node, axis}); }

  const std::vector<DiagramNode>& nodes() const noexcept { return nodes_; }
  const std::vector<DiagramEdge>& edges() const noexcept { return edges_; }
  const std::vector<DiagramLeg>& open_legs() const noexcept { return open_; }

  std::size_t num_labels() const noexcept { return edges_.size() + open_.size(); }

  /// Every axis belongs to exactly one edge or open leg, edge endpoints have
  /// equal extents, and the diagram is connected.
  void validate() const {
    if (nodes_.empty()) throw ShapeError("TensorDiagram: no nodes");
    std::vector<std::vector<int>> used(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) used[k].assign(nodes_[k].dims.size(), 0);
    auto mark = [&](std::size_t node, std::size_t axis) {
      if (node >= nodes_.size() || axis >= nodes_[node].dims.size())
        throw ShapeError("TensorDiagram: leg (" + std::to_string(node) + ", " +
                         std::to_string(axis) + ") does not exist");
      if (++used[node][axis] > 1)
        throw ShapeError("TensorDiagram: axis " + std::to_string(axis) + " of node '" +
                         nodes_[node].name + "' used twice");
    };
    for (const auto& e : edges_) {
      mark(e.node_a, e.axis_a);
      mark(e.node_b, e.axis_b);
      if (nodes_[e.node_a].dims[e.axis_a] != nodes_[e.node_b].dims[e.axis_b])
        throw ShapeError("TensorDiagram: edge between '" + nodes_[e.node_a].name + "' and '" +
                         nodes_[e.node_b].name + "' joins axes of different size");
      if (e.node_a == e.node_b)
        throw ShapeError("TensorDiagram: self-loop on '" + nodes_[e.node_a].name + "'");
    }
    for (const auto& l : open_) mark(l.node, l.axis);
    for (std::size_t k = 0; k < nodes_.size(); ++k)
      for (std::size_t a = 0; a < used[k].size(); ++a)
        if (!used[k][a])
          throw ShapeError("TensorDiagram: axis " + std::to_string(a) + " of node '" +
                           nodes_[k].name + "' is dangling");
    // Connectivity.
    std::vector<bool> seen(nodes_.size(), false);
    std::queue<std::size_t> todo;
    todo.push(0);
    seen[0] = true;
    while (!todo.empty()) {
      const std::size_t k = todo.front();
      todo.pop();
      for (const auto& e : edges_) {
        for (auto [from, to] : {std::pair{e.node_a, e.node_b}, std::pair{e.node_b, e.node_a}}) {
          if (from == k && !seen[to]) {
            seen[to] = true;
            todo.push(to);
          }
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw ShapeError("TensorDiagram: diagram is not connected");
  }

  /// Label of every (node, axis): edges are labels 0..E−1, open legs follow.
  std::vector<std::vector<std::size_t>> axis_labels() const {
    std::vector<std::vector<std::size_t>> lab(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) lab[k].assign(nodes_[k].dims.size(), 0);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      lab[edges_[e].node_a][edges_[e].axis_a] = e;
      lab[edges_[e].node_b][edges_[e].axis_b] = e;
    }
    for (std::size_t o = 0; o < open_.size(); ++o)
      lab[open_[o].node][open_[o].axis] = edges_.size() + o;
    return lab;
  }

  std::vector<std::size_t> label_sizes() const {
    std::vector<std::size_t> s;
    for (const auto& e : edges_) s.push_back(nodes_[e.node_a].dims[e.axis_a]);
    for (const auto& l : open_) s.push_back(nodes_[l.node].dims[l.axis]);
    return s;
  }

  Dims output_dims() const {
    Dims d;
    for (const auto& l : open_) d.push_back(nodes_[l.node].dims[l.axis]);
    return d;
  }

 private:
  std::vector<DiagramNode> nodes_;
  std::vector<DiagramEdge> edges_;
  std::vector<DiagramLeg> open_;
};

/// One pairwise contraction. Operand ids below the node count refer to
/// diagram nodes; id N + k refers to the result of step k.
struct ContractionStep {
  std::size_t left = 0, right = 0;
  std::uint64_t left_nodes = 0, right_nodes = 0;  // node sets as bitmasks
  Dims result_dims;
  std::uint64_t flops = 0;
};

struct ContractionPlan {
  std::size_t num_nodes = 0;
  std::vector<ContractionStep> steps;
  std::uint64_t total_flops = 0;
  std::size_t peak_elements = 0;  // largest intermediate, diagnostic only
  Dims output_dims;
};

inline constexpr std::size_t kMaxPlanNodes = 16;

namespace detail {

inline std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}

inline std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return b > std::numeric_limits<std::uint64_t>::max() - a
             ? std::numeric_limits<std::uint64_t>::max()
             : a + b;
}

inline std::uint64_t mask_numel(std::uint64_t legs, std::span<const std::size_t> sizes) {
  std::uint64_t n = 1;
  while (legs) {
    const int b = std::countr_zero(legs);
    n = sat_mul(n, sizes[static_cast<std::size_t>(b)]);
    legs &= legs - 1;
  }
  return n;
}

/// Cost of contracting two operands given their open-leg masks. `left_diag`
/// / `right_diag` mark a bare diagonal node.
inline std::uint64_t pair_cost(std::uint64_t left, std::uint64_t right, bool left_diag,
                               bool right_diag, std::span<const std::size_t> sizes) {
  const std::uint64_t shared = left & right;
  if (left_diag || right_diag) {
    const std::uint64_t other = left_diag ? right : left;
    const std::uint64_t diag = left_diag ? left : right;
    const int k = std::popcount(shared);
    if (k == 1) return mask_numel(other, sizes);
    if (k == 2) {
      const std::uint64_t r = sizes[static_cast<std::size_t>(std::countr_zero(diag))];
      return 2 * mask_numel(other, sizes) / r;
    }
  }
  return sat_mul(2, mask_numel(left | right, sizes));
}

/// Label lists of live operands, used to build plan steps in execution order.
class PlanBuilder {
 public:
  explicit PlanBuilder(const TensorDiagram& g)
      : g_(g), sizes_(g.label_sizes()), n_(g.nodes().size()) {
    if (g.num_labels() > 64) throw CapacityError("planner: more than 64 legs");
    const auto lab = g.axis_labels();
    for (std::size_t k = 0; k < n_; ++k) {
      labels_.push_back(lab[k]);
      std::uint64_t m = 0;
      for (std::size_t l : lab[k]) m ^= std::uint64_t{1} << l;
      masks_.push_back(m);
      nodes_.push_back(std::uint64_t{1} << k);
      live_.push_back(true);
    }
    plan_.num_nodes = n_;
    plan_.output_dims = g.output_dims();
  }

  std::size_t step(std::size_t a, std::size_t b) {
    if (a >= live_.size() || b >= live_.size() || a == b || !live_[a] || !live_[b])
      throw ShapeError("plan: operand pair (" + std::to_string(a) + ", " + std::to_string(b) +
                       ") is not available");
    const bool da = a < n_ && g_.nodes()[a].diagonal;
    const bool db = b < n_ && g_.nodes()[b].diagonal;
    ContractionStep s;
    s.left = a;
    s.right = b;
    s.left_nodes = nodes_[a];
    s.right_nodes = nodes_[b];
    s.flops = pair_cost(masks_[a], masks_[b], da, db, sizes_);
    const std::vector<std::size_t> out = result_labels(labels_[a], labels_[b], da, db);
    for (std::size_t l : out) s.result_dims.push_back(sizes_[l]);
    live_[a] = live_[b] = false;
    labels_.push_back(out);
    masks_.push_back(masks_[a] ^ masks_[b]);
    nodes_.push_back(nodes_[a] | nodes_[b]);
    live_.push_back(true);
    plan_.total_flops = sat_add(plan_.total_flops, s.flops);
    plan_.peak_elements =
        std::max<std::size_t>(plan_.peak_elements, mask_numel(masks_.back(), sizes_));
    plan_.steps.push_back(std::move(s));
    return labels_.size() - 1;
  }

  ContractionPlan finish() {
    if (std::count(live_.begin(), live_.end(), true) != 1)
      throw ShapeError("plan: steps do not reduce the diagram to a single tensor");
    return plan_;
  }

  /// Label order of a contraction result; must agree with execute().
  static std::vector<std::size_t> result_labels(const std::vector<std::size_t>& a,
                                                const std::vector<std::size_t>& b, bool da,
                                                bool db) {
    auto shared_with = [](const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
      std::vector<std::size_t> s;
      for (std::size_t l : x)
        if (std::find(y.begin(), y.end(), l) != y.end()) s.push_back(l);
      return s;
    };
    const auto shared = shared_with(a, b);
    if ((da || db) && shared.size() == 1) {
      const auto& diag = da ? a : b;
      std::vector<std::size_t> other = da ? b : a;
      const std::size_t replacement = diag[0] == shared[0] ? diag[1] : diag[0];
      for (std::size_t& l : other)
        if (l == shared[0]) l = replacement;
      return other;
    }
    std::vector<std::size_t> out;
    for (std::size_t l : a)
      if (std::find(shared.begin(), shared.end(), l) == shared.end()) out.push_back(l);
    for (std::size_t l : b)
      if (std::find(shared.begin(), shared.end(), l) == shared.end()) out.push_back(l);
    return out;
  }

 private:
  const TensorDiagram& g_;
  std::vector<std::size_t> sizes_;
  std::size_t n_;
  std::vector<std::vector<std::size_t>> labels_;
  std::vector<std::uint64_t> masks_;
  std::vector<std::uint64_t> nodes_;
  std::vector<bool> live_;
  ContractionPlan plan_;
};

}  // namespace detail

/// Plan from an explicit sequence of operand pairs (ids as in ContractionStep).
inline ContractionPlan make_plan(const TensorDiagram& g,
                                 std::span<const std::pair<std::size_t, std::size_t>> order) {
  g.validate();
  detail::PlanBuilder b(g);
  for (auto [x, y] : order) b.step(x, y);
  return b.finish();
}

/// Minimal-FLOP plan over all binary contraction trees (outer products
/// included), by dynamic programming over node subsets. Among equal-cost
/// trees the one whose step sequence of (min node id, min node id) pairs is
/// lexicographically smallest wins, with each subtree's steps listed before
/// its parent and the subtree holding the smaller node id first.
inline ContractionPlan plan(const TensorDiagram& g) {
  g.validate();
  const std::size_t n = g.nodes().size();
  if (n > kMaxPlanNodes)
    throw CapacityError("plan: " + std::to_string(n) + " nodes exceed the limit of " +
                        std::to_string(kMaxPlanNodes));
  if (g.num_labels() > 64) throw CapacityError("plan: more than 64 legs");

  const auto sizes = g.label_sizes();
  const auto lab = g.axis_labels();
  const std::size_t full = (std::size_t{1} << n) - 1;
  std::vector<std::uint64_t> legs(full + 1, 0);
  for (std::size_t s = 1; s <= full; ++s) {
    const int low = std::countr_zero(s);
    std::uint64_t m = 0;
    for (std::size_t l : lab[static_cast<std::size_t>(low)]) m ^= std::uint64_t{1} << l;
    legs[s] = legs[s & (s - 1)] ^ m;
  }
  auto is_diag = [&](std::size_t s) {
    return std::popcount(s) == 1 && g.nodes()[static_cast<std::size_t>(std::countr_zero(s))].diagonal;
  };

  constexpr std::uint64_t inf = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> cost(full + 1, inf);
  std::vector<std::size_t> split(full + 1, 0);
  using Key = std::pair<std::uint8_t, std::uint8_t>;
  std::vector<std::vector<Key>> keys(full + 1);
  auto min_id = [](std::size_t s) { return static_cast<std::uint8_t>(std::countr_zero(s)); };

  for (std::size_t s = 1; s <= full; ++s) {
    if (std::popcount(s) == 1) {
      cost[s] = 0;
      continue;
    }
    const std::size_t low = s & (~s + 1);
    const std::size_t rest = s ^ low;
    // A ranges over subsets of s that contain `low`, excluding s itself.
    for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
      const std::size_t a = sub | low;
      if (a != s) {
        const std::size_t b = s ^ a;
        const std::uint64_t c = detail::sat_add(
            detail::sat_add(cost[a], cost[b]),
            detail::pair_cost(legs[a], legs[b], is_diag(a), is_diag(b), sizes));
        if (c < cost[s]) {
          cost[s] = c;
          split[s] = a;
          keys[s].clear();
        } else if (c == cost[s]) {
          // Tie: compare step sequences lazily.
          std::vector<Key> cand = keys[a];
          cand.insert(cand.end(), keys[b].begin(), keys[b].end());
          cand.push_back({min_id(a), min_id(b)});
          if (keys[s].empty()) {
            const std::size_t a0 = split[s], b0 = s ^ a0;
            keys[s] = keys[a0];
            keys[s].insert(keys[s].end(), keys[b0].begin(), keys[b0].end());
            keys[s].push_back({min_id(a0), min_id(b0)});
          }
          if (cand < keys[s]) {
            split[s] = a;
            keys[s] = std::move(cand);
          }
        }
      }
      if (sub == 0) break;
    }
    if (keys[s].empty()) {
      const std::size_t a = split[s], b = s ^ a;
      keys[s] = keys[a];
      keys[s].insert(keys[s].end(), keys[b].begin(), keys[b].end());
      keys[s].push_back({min_id(a), min_id(b)});
    }
  }

  // Emit steps in post-order.
  detail::PlanBuilder builder(g);
  auto emit = [&](auto&& self, std::size_t s) -> std::size_t {
    if (std::popcount(s) == 1) return static_cast<std::size_t>(std::countr_zero(s));
    const std::size_t a = self(self, split[s]);
    const std::size_t b = self(self, s ^ split[s]);
    return builder.step(a, b);
  };
  emit(emit, full);
  return builder.finish();
}

namespace detail {

/// Axis permutation: result axis k is input axis perm[k].
inline Tensor permute(const Tensor& t, std::span<const std::size_t> perm) {
  const Dims& d = t.dims();
  const std::size_t rank = d.size();
  bool identity = true;
  for (std::size_t k = 0; k < rank; ++k) identity = identity && perm[k] == k;
  if (identity) return t;
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t k = rank - 1; k-- > 0;) in_stride[k] = in_stride[k + 1] * d[k + 1];
  Dims out_dims(rank);
  for (std::size_t k = 0; k < rank; ++k) out_dims[k] = d[perm[k]];
  Tensor out(out_dims);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t pos = 0; pos < out.size(); ++pos) {
    std::size_t src = 0;
    for (std::size_t k = 0; k < rank; ++k) src += idx[k] * in_stride[perm[k]];
    out[pos] = t[src];
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < out_dims[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

struct Operand {
  Tensor t;
  std::vector<std::size_t> labels;  // empty labels list means a scalar
  bool diagonal = false;
};

inline Tensor make_tensor(Dims dims, std::vector<double> data) {
  if (dims.empty()) dims.push_back(1);
  return Tensor(std::move(dims), std::move(data));
}

inline Operand densify(const Operand& d) {
  const std::size_t r = d.t.size();
  Tensor m({r, r});
  for (std::size_t i = 0; i < r; ++i) m[i * r + i] = d.t[i];
  return {std::move(m), d.labels, false};
}

inline Operand contract_dense(const Operand& a, const Operand& b,
                              std::span<const std::size_t> sizes) {
  std::vector<std::size_t> shared, free_a, free_b;
  std::vector<std::size_t> pa_free, pa_shared, pb_shared, pb_free;
  for (std::size_t k = 0; k < a.labels.size(); ++k) {
    const auto it = std::find(b.labels.begin(), b.labels.end(), a.labels[k]);
    if (it == b.labels.end()) {
      free_a.push_back(a.labels[k]);
      pa_free.push_back(k);
    } else {
      shared.push_back(a.labels[k]);
      pa_shared.push_back(k);
      pb_shared.push_back(static_cast<std::size_t>(it - b.labels.begin()));
    }
  }
  for (std::size_t k = 0; k < b.labels.size(); ++k)
    if (std::find(shared.begin(), shared.end(), b.labels[k]) == shared.end()) {
      free_b.push_back(b.labels[k]);
      pb_free.push_back(k);
    }
  std::vector<std::size_t> perm_a = pa_free, perm_b = pb_shared;
  perm_a.insert(perm_a.end(), pa_shared.begin(), pa_shared.end());
  perm_b.insert(perm_b.end(), pb_free.begin(), pb_free.end());
  const Tensor ta = a.labels.empty() ? a.t : permute(a.t, perm_a);
  const Tensor tb = b.labels.empty() ? b.t : permute(b.t, perm_b);
  std::size_t m = 1, k = 1, n = 1;
  for (std::size_t l : free_a) m *= sizes[l];
  for (std::size_t l : shared) k *= sizes[l];
  for (std::size_t l : free_b) n *= sizes[l];
  const Matrix c = matmul(Matrix(m, k, ta.values()), Matrix(k, n, tb.values()));
  Dims dims;
  std::vector<std::size_t> labels = free_a;
  labels.insert(labels.end(), free_b.begin(), free_b.end());
  for (std::size_t l : labels) dims.push_back(sizes[l]);
  return {make_tensor(std::move(dims), c.values()), std::move(labels), false};
}

inline Operand contract(const Operand& a, const Operand& b, std::span<const std::size_t> sizes) {
  if (a.diagonal || b.diagonal) {
    const Operand& diag = a.diagonal ? a : b;
    const Operand& other = a.diagonal ? b : a;
    std::vector<std::size_t> shared;
    for (std::size_t l : diag.labels)
      if (std::find(other.labels.begin(), other.labels.end(), l) != other.labels.end())
        shared.push_back(l);
    if (shared.size() == 1 && !other.diagonal) {
      const auto labels =
          PlanBuilder::result_labels(a.labels, b.labels, a.diagonal, b.diagonal);
      const std::size_t axis = static_cast<std::size_t>(
          std::find(other.labels.begin(), other.labels.end(), shared[0]) - other.labels.begin());
      Operand out{other.t, labels, false};
      const Dims& d = other.t.dims();
      std::size_t inner = 1;
      for (std::size_t k = axis + 1; k < d.size(); ++k) inner *= d[k];
      const std::size_t extent = d[axis];
      for (std::size_t pos = 0; pos < out.t.size(); ++pos)
        out.t[pos] *= diag.t[(pos / inner) % extent];
      return out;
    }
    return contract_dense(a.diagonal ? densify(a) : a, b.diagonal ? densify(b) : b, sizes);
  }
  return contract_dense(a, b, sizes);
}

}  // namespace detail

/// Runs a plan. `data[k]` binds node k: dims must match the node, except
/// diagonal nodes which take their length-r diagonal. The result has the
/// diagram's open legs, in order.
inline Tensor execute(const TensorDiagram& g, const ContractionPlan& p,
                      std::span<const Tensor> data) {
  const auto& nodes = g.nodes();
  if (data.size() != nodes.size())
    throw BindingError("execute: " + std::to_string(data.size()) + " tensors bound to " +
                       std::to_string(nodes.size()) + " nodes");
  if (p.num_nodes != nodes.size()) throw BindingError("execute: plan belongs to another diagram");
  const auto lab = g.axis_labels();
  const auto sizes = g.label_sizes();
  std::vector<detail::Operand> ops;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Dims want = nodes[k].diagonal ? Dims{nodes[k].dims[0]} : nodes[k].dims;
    if (data[k].dims() != want)
      throw BindingError("execute: node '" + nodes[k].name + "' expects dims " +
                         dims_string(want) + ", bound " + dims_string(data[k].dims()));
    ops.push_back({data[k], lab[k], nodes[k].diagonal});
  }
  for (const auto& s : p.steps) ops.push_back(detail::contract(ops[s.left], ops[s.right], sizes));
  detail::Operand& last = ops.back();
  if (last.diagonal) last = detail::densify(last);

  // Reorder to the open-leg order.
  const std::size_t e = g.edges().size();
  std::vector<std::size_t> perm;
  for (std::size_t o = 0; o < g.open_legs().size(); ++o) {
    const auto it = std::find(last.labels.begin(), last.labels.end(), e + o);
    perm.push_back(static_cast<std::size_t>(it - last.labels.begin()));
  }
  Dims out_dims = g.output_dims();
  if (out_dims.empty()) return Tensor({1}, last.t.values());
  return Tensor(std::move(out_dims), detail::permute(last.t, perm).values());
}

}  // namespace spectt
