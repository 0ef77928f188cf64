#pragma once

// y = W x for parameterized W without forming W: the factor diagram of W
// plus x is planned and contracted.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spectt/dense.hpp"
#include "spectt/error.hpp"
#include "spectt/householder.hpp"
#include "spectt/planner.hpp"
#include "spectt/spectral.hpp"
#include "spectt/sttp.hpp"
#include "spectt/svdp.hpp"

namespace spectt {

/// A diagram together with the tensors bound to its nodes.
struct BoundDiagram {
  TensorDiagram diagram;
  std::vector<Tensor> data;
};

/// Nodes U (d_out×r), Σ, V (d_in×r) and, when d_x > 0, x (d_in×d_x).
/// Open legs: d_out, then d_x (or d_in without x).
inline TensorDiagram svdp_diagram(std::size_t d_out, std::size_t d_in, std::size_t r,
                                  std::size_t d_x) {
  TensorDiagram g;
  const std::size_t u = g.add_node("U", {d_out, r});
  const std::size_t s = g.add_diagonal("Sigma", r);
  const std::size_t v = g.add_node("V", {d_in, r});
  g.connect(u, 1, s, 0);
  g.connect(s, 1, v, 1);
  g.open(u, 0);
  if (d_x > 0) {
    const std::size_t x = g.add_node("x", {d_in, d_x});
    g.connect(v, 0, x, 0);
    g.open(x, 1);
  } else {
    g.open(v, 0);
  }
  return g;
}

/// Chain U¹..U^{D_out}, Σ, V^{D_in}..V¹ and the tensorized input
/// x̃ (n^in_{D_in}, ..., n^in_1, d_x). Boundary rank-1 legs are dropped.
/// Open legs: the out modes in order, then d_x. Without x (d_x = 0) the
/// in modes of V^{D_in}..V¹ are opened instead, in W's column order.
inline TensorDiagram sttp_diagram(const SttpShape& s, std::size_t d_x) {
  const Dims& n = s.schedule.n;
  const Dims& R = s.schedule.ranks;
  const std::size_t dout = s.out_modes(), din = s.in_modes(), D = s.num_cores();
  TensorDiagram g;
  std::vector<std::size_t> id(D), mode_axis(D);
  for (std::size_t k = 0; k < D; ++k) {
    const bool v_side = k >= dout;
    // Chain-order legs of core k: R[k] on the left, R[k+1] on the right. A
    // V-side core is stored with the Σ-facing leg (R[k]) last.
    Dims dims;
    const bool drop_left = k == 0;
    const bool drop_right = k + 1 == D;
    if (!v_side) {
      if (!drop_left) dims.push_back(R[k]);
      mode_axis[k] = dims.size();
      dims.push_back(n[k]);
      dims.push_back(R[k + 1]);
    } else {
      if (!drop_right) dims.push_back(R[k + 1]);
      mode_axis[k] = dims.size();
      dims.push_back(n[k]);
      dims.push_back(R[k]);
    }
    const std::string name = v_side ? "V" + std::to_string(D - k) : "U" + std::to_string(k + 1);
    id[k] = g.add_node(name, std::move(dims));
  }
  const std::size_t sigma = g.add_diagonal("Sigma", s.r);
  for (std::size_t k = 0; k + 1 < dout; ++k)
    g.connect(id[k], mode_axis[k] + 1, id[k + 1], 0);
  g.connect(id[dout - 1], mode_axis[dout - 1] + 1, sigma, 0);
  g.connect(sigma, 1, id[dout], mode_axis[dout] + 1);
  for (std::size_t k = dout; k + 1 < D; ++k)
    g.connect(id[k], 0, id[k + 1], mode_axis[k + 1] + 1);
  for (std::size_t k = 0; k < dout; ++k) g.open(id[k], mode_axis[k]);
  if (d_x > 0) {
    Dims xd(n.begin() + static_cast<std::ptrdiff_t>(dout), n.end());
    xd.push_back(d_x);
    const std::size_t x = g.add_node("x", std::move(xd));
    for (std::size_t k = dout; k < D; ++k) g.connect(id[k], mode_axis[k], x, k - dout);
    g.open(x, din);
  } else {
    for (std::size_t k = dout; k < D; ++k) g.open(id[k], mode_axis[k]);
  }
  return g;
}

inline void check_input(std::size_t d_in, const Matrix& x) {
  if (x.rows() != d_in)
    throw ShapeError("apply_map: x has " + std::to_string(x.rows()) + " rows, expected d_in = " +
                     std::to_string(d_in));
  if (x.cols() == 0) throw ShapeError("apply_map: x has no columns");
}

/// SVDP diagram with decoded factors bound; `x` may be null for the
/// weight-only diagram.
inline BoundDiagram bind_svdp(const SvdpParams& p, const Matrix* x) {
  validate(p, false);
  BoundDiagram b{svdp_diagram(p.d_out, p.d_in, p.rank, x ? x->cols() : 0), {}};
  const Matrix u = decode(p.u), v = decode(p.v);
  const std::vector<double> sigma = materialize_sigma(p.spectrum);
  b.data.emplace_back(Dims{p.d_out, p.rank}, u.values());
  b.data.emplace_back(Dims{p.rank}, sigma);
  b.data.emplace_back(Dims{p.d_in, p.rank}, v.values());
  if (x) b.data.emplace_back(Dims{p.d_in, x->cols()}, x->values());
  return b;
}

inline BoundDiagram bind_sttp(const SttpParams& p, const Matrix* x) {
  validate(p);
  const SttpShape& s = p.shape;
  BoundDiagram b{sttp_diagram(s, x ? x->cols() : 0), {}};
  const std::vector<Matrix> frames = decode_cores(p);
  const auto& nodes = b.diagram.nodes();
  for (std::size_t k = 0; k < s.num_cores(); ++k)
    b.data.emplace_back(nodes[k].dims, frames[k].values());
  b.data.emplace_back(Dims{s.r}, materialize_sigma(p.spectrum));
  if (x) b.data.emplace_back(nodes.back().dims, x->values());
  return b;
}

inline Matrix run_bound(const BoundDiagram& b, std::size_t d_out, std::size_t d_x) {
  const ContractionPlan pl = plan(b.diagram);
  const Tensor y = execute(b.diagram, pl, b.data);
  return Matrix(d_out, d_x, y.values());
}

inline Matrix apply_map(const SvdpParams& p, const Matrix& x) {
  check_input(p.d_in, x);
  return run_bound(bind_svdp(p, &x), p.d_out, x.cols());
}

inline Matrix apply_map(const SttpParams& p, const Matrix& x) {
  check_input(p.shape.d_in(), x);
  return run_bound(bind_sttp(p, &x), p.shape.d_out(), x.cols());
}

struct ApplyCost {
  std::uint64_t planned = 0;     // optimal plan of the diagram with x
  std::uint64_t decompress = 0;  // optimal plan of W alone, plus the dense product
};

inline std::uint64_t dense_apply_flops(std::size_t d_out, std::size_t d_in, std::size_t d_x) {
  return 2ULL * d_out * d_in * d_x;
}

inline ApplyCost apply_cost_svdp(std::size_t d_out, std::size_t d_in, std::size_t r,
                                 std::size_t d_x) {
  return {plan(svdp_diagram(d_out, d_in, r, d_x)).total_flops,
          plan(svdp_diagram(d_out, d_in, r, 0)).total_flops + dense_apply_flops(d_out, d_in, d_x)};
}

inline ApplyCost apply_cost_sttp(const SttpShape& s, std::size_t d_x) {
  return {plan(sttp_diagram(s, d_x)).total_flops,
          plan(sttp_diagram(s, 0)).total_flops + dense_apply_flops(s.d_out(), s.d_in(), d_x)};
}

}  // namespace spectt
