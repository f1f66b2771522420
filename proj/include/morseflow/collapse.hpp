#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "morseflow/linalg.hpp"

namespace morseflow::solver {

// Description of a collapsed subgraph: lifted edges with constant gradient
// vectors, length variables shared per base edge. The blow-up system asks for
// vertex potentials phi with phi(en) - phi(st) = grad * l(var) on every
// lifted edge, together with l >= 0 and |l| = 1.
struct CollapsedLiftedEdge {
  int st = 0;
  int en = 0;
  Vec2 grad{0, 0};
  int var = 0;  // base length variable index
};

struct CollapsedGraph {
  int n_vertices = 0;
  int n_vars = 0;
  std::vector<CollapsedLiftedEdge> edges;
};

enum class CollapseKind { Empty, Isolated, PositiveDimensional };

struct CollapseResult {
  CollapseKind kind = CollapseKind::Empty;
  // extreme rays of the admissible cone, unit-normalized
  std::vector<std::vector<double>> rays;
  int cone_dim = 0;
  std::string description;
};

namespace detail {

// Cycle constraints: eliminate the potentials with a spanning forest; every
// non-tree edge contributes two scalar rows.
inline Matrix cycle_constraints(const CollapsedGraph& g) {
  std::vector<int> parent(g.n_vertices, -1), parent_edge(g.n_vertices, -1), comp(g.n_vertices, -1);
  std::vector<int> sign(g.n_vertices, 0);
  std::vector<std::vector<std::pair<int, int>>> adj(g.n_vertices);  // (edge idx, dir)
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    adj[g.edges[i].st].push_back({static_cast<int>(i), +1});
    adj[g.edges[i].en].push_back({static_cast<int>(i), -1});
  }
  std::vector<bool> tree_edge(g.edges.size(), false);
  int ncomp = 0;
  for (int s = 0; s < g.n_vertices; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = ncomp++;
    std::vector<int> stack{s};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (auto [ei, dir] : adj[v]) {
        const auto& e = g.edges[ei];
        int w = dir > 0 ? e.en : e.st;
        if (comp[w] >= 0) continue;
        comp[w] = comp[v];
        parent[w] = v;
        parent_edge[w] = ei;
        sign[w] = dir;
        tree_edge[ei] = true;
        stack.push_back(w);
      }
    }
  }
  // potential of v relative to its component root, as a row over the vars
  auto accumulate_potential = [&](int v, std::vector<Vec2>& row) {
    while (parent[v] >= 0) {
      const auto& e = g.edges[parent_edge[v]];
      row[e.var] += e.grad * static_cast<double>(sign[v]);
      v = parent[v];
    }
  };
  std::vector<std::vector<double>> rows;
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    if (tree_edge[ei]) continue;
    const auto& e = g.edges[ei];
    std::vector<Vec2> pot_en(g.n_vars, Vec2{0, 0}), pot_st(g.n_vars, Vec2{0, 0});
    accumulate_potential(e.en, pot_en);
    accumulate_potential(e.st, pot_st);
    // phi(en) - phi(st) - grad*l(var) = 0
    std::vector<double> rx(g.n_vars, 0.0), ry(g.n_vars, 0.0);
    for (int k = 0; k < g.n_vars; ++k) {
      rx[k] = pot_en[k].x - pot_st[k].x;
      ry[k] = pot_en[k].y - pot_st[k].y;
    }
    rx[e.var] -= e.grad.x;
    ry[e.var] -= e.grad.y;
    rows.push_back(rx);
    rows.push_back(ry);
  }
  Matrix C(rows.size(), g.n_vars);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < g.n_vars; ++j) C(i, j) = rows[i][j];
  return C;
}

// 1-dim kernel generator of C restricted to the support set, zero elsewhere.
inline bool support_ray(const Matrix& C, const std::vector<int>& support, int n_vars,
                        std::vector<double>& ray, double tol) {
  const int k = static_cast<int>(support.size());
  Matrix Cs(C.rows(), k);
  for (std::size_t i = 0; i < C.rows(); ++i)
    for (int j = 0; j < k; ++j) Cs(i, j) = C(i, support[j]);
  auto kernel = null_space(Cs, tol);
  if (kernel.size() != 1) return false;  // extreme rays have minimal support
  std::vector<double>& x = kernel[0];
  bool nonneg = true, nonpos = true;
  for (double v : x) {
    if (v < -1e-9) nonneg = false;
    if (v > 1e-9) nonpos = false;
  }
  if (!nonneg && !nonpos) return false;
  if (nonpos)
    for (double& v : x) v = -v;
  double nrm = 0.0;
  for (double v : x) nrm += v * v;
  nrm = std::sqrt(nrm);
  if (nrm < tol) return false;
  ray.assign(n_vars, 0.0);
  for (int j = 0; j < k; ++j) ray[support[j]] = std::max(x[j], 0.0) / nrm;
  return true;
}

}  // namespace detail

// Classifies the solution set of the blow-up system on the unit sphere
// intersected with the nonnegative orthant: empty, a single ray (isolated
// point on the sphere), or a positive-dimensional family. Exact linear
// algebra plus facet enumeration over supports; intended for small systems.
inline CollapseResult linearized_collapse(const CollapsedGraph& g, double tol = 1e-9) {
  if (g.n_vars < 1 || g.n_vars > 16)
    throw std::invalid_argument("linearized_collapse: variable count out of supported range");
  for (const auto& e : g.edges)
    if (e.st < 0 || e.st >= g.n_vertices || e.en < 0 || e.en >= g.n_vertices || e.var < 0 ||
        e.var >= g.n_vars)
      throw std::invalid_argument("linearized_collapse: malformed subgraph description");
  Matrix C = detail::cycle_constraints(g);
  CollapseResult res;
  if (C.rows() == 0) {
    // no cycle constraints: the whole orthant is admissible
    res.cone_dim = g.n_vars;
    for (int j = 0; j < g.n_vars; ++j) {
      std::vector<double> ray(g.n_vars, 0.0);
      ray[j] = 1.0;
      res.rays.push_back(ray);
    }
    res.kind = g.n_vars == 1 ? CollapseKind::Isolated : CollapseKind::PositiveDimensional;
    res.description = g.n_vars == 1 ? "single length, unit value forced"
                                    : "unconstrained simplex of admissible lengths";
    return res;
  }
  // enumerate extreme rays by support
  for (int mask = 1; mask < (1 << g.n_vars); ++mask) {
    std::vector<int> support;
    for (int j = 0; j < g.n_vars; ++j)
      if (mask & (1 << j)) support.push_back(j);
    std::vector<double> ray;
    if (!detail::support_ray(C, support, g.n_vars, ray, tol)) continue;
    // verify C ray = 0
    bool ok = true;
    for (std::size_t i = 0; i < C.rows() && ok; ++i) {
      double s = 0.0;
      for (int j = 0; j < g.n_vars; ++j) s += C(i, j) * ray[j];
      if (std::abs(s) > 1e-7) ok = false;
    }
    if (!ok) continue;
    bool dup = false;
    for (const auto& r : res.rays) {
      double d = 0.0;
      for (int j = 0; j < g.n_vars; ++j) d += std::abs(r[j] - ray[j]);
      if (d < 1e-7) dup = true;
    }
    if (!dup) res.rays.push_back(ray);
  }
  if (res.rays.empty()) {
    res.kind = CollapseKind::Empty;
    res.description = "cycle constraints admit no nonzero nonnegative lengths";
    return res;
  }
  Matrix Rm(res.rays.size(), g.n_vars);
  for (std::size_t i = 0; i < res.rays.size(); ++i)
    for (int j = 0; j < g.n_vars; ++j) Rm(i, j) = res.rays[i][j];
  res.cone_dim = static_cast<int>(matrix_rank(Rm, 1e-9));
  res.kind = res.cone_dim >= 2 ? CollapseKind::PositiveDimensional : CollapseKind::Isolated;
  res.description = res.cone_dim >= 2 ? "positive-dimensional family on the unit sphere"
                                      : "isolated unit solution";
  return res;
}

// Canonical two-gradient configuration: a marginal fold (variable x1) whose
// strands see the two gradients, closed through a two-segment path (x2, x3).
// The cycle constraint is  x1*df - (x1+x2+x3)*dg = 0.
inline CollapsedGraph two_gradient_configuration(const Vec2& df, const Vec2& dg) {
  CollapsedGraph g;
  g.n_vertices = 4;
  g.n_vars = 3;
  g.edges.push_back({0, 1, df, 0});
  g.edges.push_back({0, 2, dg, 0});
  g.edges.push_back({2, 3, dg, 1});
  g.edges.push_back({3, 1, dg, 2});
  return g;
}

// |E_Gamma| = 1: a single collapsed edge (its strands over one base edge).
inline CollapsedGraph single_edge_collapse(const Vec2& grad) {
  CollapsedGraph g;
  g.n_vertices = 2;
  g.n_vars = 1;
  g.edges.push_back({0, 1, grad, 0});
  return g;
}

}  // namespace morseflow::solver
