#pragma once

#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "morseflow/trees.hpp"

namespace morseflow::cover {

using algebra::Permutation;
using nlohmann::json;
using trees::FoldedRibbonTree;
using trees::TreeAnalysis;
using trees::VertexKind;

// Strand of the cover over one base edge. Sheet labels follow the boundary
// regions of the lifted planar picture: h_l (resp. h_r) is the sheet of the
// region on the left (right) of the edge walked away from the root, and
// h_l = sigma(e)(h_r). Over a marginal exterior edge the kappa-2 strands with
// h_l == h_r are kept but flagged as spurs; the flow is constant on them.
struct LiftedEdge {
  int id = -1;
  int base_edge = -1;
  int h_r = 0;
  int h_l = 0;
  int v_st = -1;  // lifted vertex over the base src (anti-root side)
  int v_en = -1;  // lifted vertex over the base dst (root side)
  bool spur = false;
};

struct LiftedVertex {
  int id = -1;
  int base_vertex = -1;
};

struct RibbonGraph {
  FoldedRibbonTree base;
  TreeAnalysis analysis;
  std::vector<LiftedVertex> lifted_vertices;
  std::vector<LiftedEdge> lifted_edges;  // id == base_edge * kappa + (h_r - 1)
  // marginal exterior base edge -> the two flipped lifted edge ids
  std::map<int, std::pair<int, int>> marginal_pairs;

  int kappa() const { return base.kappa; }
  const LiftedEdge& strand(int base_edge, int h_r) const {
    return lifted_edges[base_edge * base.kappa + (h_r - 1)];
  }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

// Builds the ribbon graph determined by a folded ribbon tree. Over each base
// edge the kappa strands carry (h_r, h_l = sigma(h_r)). At an internal vertex
// with ccw edge order (g0 = outgoing, g1, ..., g_{d-1}) the strand ends chain
// around the lifted boundary regions:
//   h_r(g0) = h_r(g1),  h_l(g_k) = h_r(g_{k+1})  (1 <= k <= d-2),
//   h_l(g_{d-1}) = h_l(g0),
// which is the unique gluing keeping sheet labels constant on the regions
// between consecutive edges. At a marginal exterior vertex the two flipped
// strands share their start vertex.
inline RibbonGraph build_cover(const FoldedRibbonTree& t) {
  trees::ValidationReport rep = trees::validate(t);
  if (!rep.ok)
    throw std::invalid_argument("build_cover: invalid tree (" + rep.issues[0].clause + ": " +
                                rep.issues[0].message + ")");
  RibbonGraph g;
  g.base = t;
  g.analysis = trees::analyze(t);
  const int kappa = t.kappa;
  const int ne = static_cast<int>(t.edges.size());

  // slot = end of a strand: index (edge, h_r, end), end 0 = src side, 1 = dst side
  auto slot = [&](int eid, int h_r, int end) { return (eid * kappa + (h_r - 1)) * 2 + end; };
  detail::UnionFind uf(ne * kappa * 2);

  auto end_at = [&](int eid, int v) {
    const auto& e = t.edges[eid];
    if (e.src == v) return 0;
    if (e.dst == v) return 1;
    throw std::logic_error("build_cover: edge not incident to vertex");
  };
  auto h_l_of = [&](int eid, int h_r) { return t.edges[eid].sigma.apply(h_r); };
  auto strand_with_h_l = [&](int eid, int h_l) { return t.edges[eid].sigma.inverse().apply(h_l); };

  for (const auto& [v, cyc] : t.cyclic_order) {
    const int d = static_cast<int>(cyc.size());
    for (int sheet = 1; sheet <= kappa; ++sheet) {
      // region between g0 and g1 (right of both)
      uf.unite(slot(cyc[0], sheet, end_at(cyc[0], v)), slot(cyc[1], sheet, end_at(cyc[1], v)));
      // regions between consecutive incoming edges: left of g_k, right of g_{k+1}
      for (int k = 1; k <= d - 2; ++k)
        uf.unite(slot(cyc[k], strand_with_h_l(cyc[k], sheet), end_at(cyc[k], v)),
                 slot(cyc[k + 1], sheet, end_at(cyc[k + 1], v)));
      // region between g_{d-1} and g0 (left of both)
      uf.unite(slot(cyc[d - 1], strand_with_h_l(cyc[d - 1], sheet), end_at(cyc[d - 1], v)),
               slot(cyc[0], strand_with_h_l(cyc[0], sheet), end_at(cyc[0], v)));
    }
  }

  // marginal exterior vertices: the flipped pair shares its start vertex
  for (const auto& v : t.vertices) {
    if (v.kind != VertexKind::MarginalExterior) continue;
    int eid = g.analysis.incident[v.id][0];
    const Permutation& tau = t.edges[eid].sigma;
    int alpha = 0, beta = 0;
    for (int j = 1; j <= kappa; ++j)
      if (tau.apply(j) != j) {
        if (!alpha)
          alpha = j;
        else
          beta = j;
      }
    uf.unite(slot(eid, alpha, 0), slot(eid, beta, 0));
    g.marginal_pairs[eid] = {eid * kappa + (alpha - 1), eid * kappa + (beta - 1)};
  }

  // assign lifted vertex ids in deterministic slot order
  std::map<int, int> class_id;
  auto lifted_id = [&](int eid, int h_r, int end) {
    int root = uf.find(slot(eid, h_r, end));
    auto it = class_id.find(root);
    if (it != class_id.end()) return it->second;
    int id = static_cast<int>(g.lifted_vertices.size());
    class_id.emplace(root, id);
    const auto& e = t.edges[eid];
    g.lifted_vertices.push_back({id, end == 0 ? e.src : e.dst});
    return id;
  };

  for (int eid = 0; eid < ne; ++eid) {
    bool marg_ext = g.marginal_pairs.count(eid) > 0;
    for (int h_r = 1; h_r <= kappa; ++h_r) {
      LiftedEdge le;
      le.id = eid * kappa + (h_r - 1);
      le.base_edge = eid;
      le.h_r = h_r;
      le.h_l = h_l_of(eid, h_r);
      le.v_st = lifted_id(eid, h_r, 0);
      le.v_en = lifted_id(eid, h_r, 1);
      le.spur = marg_ext && le.h_l == le.h_r;
      g.lifted_edges.push_back(le);
    }
  }
  return g;
}

inline int euler_characteristic(const RibbonGraph& g) {
  return static_cast<int>(g.lifted_vertices.size()) - static_cast<int>(g.lifted_edges.size());
}

struct StrandTrace {
  std::vector<int> lifted_edges;  // one per base edge of the path
  std::vector<int> sheets;        // h_r per traversed strand
  int exit_sheet = 0;             // sheet after the final vertex (flipped at a fold)
};

// Follows a sheet along a connected base path, starting at the path's first
// vertex. Crossing a vertex continues onto the strand of the next edge that
// shares the current lifted vertex (at a marginal vertex: the other flipped
// strand).
inline StrandTrace strands_through(const RibbonGraph& g, const trees::EdgePath& path,
                                   int start_vertex, int sheet) {
  if (sheet < 1 || sheet > g.kappa()) throw std::out_of_range("strands_through: sheet out of range");
  StrandTrace tr;
  if (path.empty()) return tr;
  int cur_vertex = start_vertex;
  int cur_lifted = -1;
  int prev_strand = -1;
  for (std::size_t i = 0; i < path.size(); ++i) {
    int eid = path[i];
    const auto& e = g.base.edges[eid];
    if (e.src != cur_vertex && e.dst != cur_vertex)
      throw std::invalid_argument("strands_through: path is not connected at edge " +
                                  std::to_string(eid));
    int end = e.src == cur_vertex ? 0 : 1;
    int chosen = -1;
    if (i == 0) {
      chosen = eid * g.kappa() + (sheet - 1);
      cur_lifted = end == 0 ? g.lifted_edges[chosen].v_st : g.lifted_edges[chosen].v_en;
    } else {
      for (int h = 1; h <= g.kappa(); ++h) {
        const auto& le = g.strand(eid, h);
        int vend = end == 0 ? le.v_st : le.v_en;
        if (vend == cur_lifted && le.id != prev_strand) {
          chosen = le.id;
          break;
        }
      }
      if (chosen < 0)  // lone continuation (e.g. re-entering the same strand)
        for (int h = 1; h <= g.kappa(); ++h) {
          const auto& le = g.strand(eid, h);
          int vend = end == 0 ? le.v_st : le.v_en;
          if (vend == cur_lifted) {
            chosen = le.id;
            break;
          }
        }
      if (chosen < 0)
        throw std::logic_error("strands_through: no strand continues the sheet");
    }
    const auto& le = g.lifted_edges[chosen];
    tr.lifted_edges.push_back(chosen);
    tr.sheets.push_back(le.h_r);
    cur_vertex = e.src == cur_vertex ? e.dst : e.src;
    cur_lifted = cur_vertex == e.dst ? le.v_en : le.v_st;
    prev_strand = chosen;
  }
  // continuation past the final vertex: at a marginal fold the sheet flips
  tr.exit_sheet = g.lifted_edges[prev_strand].h_r;
  if (g.base.vertices[cur_vertex].kind == VertexKind::MarginalExterior) {
    int eid = path.back();
    auto it = g.marginal_pairs.find(eid);
    if (it != g.marginal_pairs.end()) {
      auto [sa, sb] = it->second;
      if (prev_strand == sa) tr.exit_sheet = g.lifted_edges[sb].h_r;
      if (prev_strand == sb) tr.exit_sheet = g.lifted_edges[sa].h_r;
    }
  }
  return tr;
}

inline json to_json(const RibbonGraph& g) {
  json jv = json::array();
  for (const auto& v : g.lifted_vertices)
    jv.push_back({{"id", v.id}, {"base_vertex", v.base_vertex}});
  json je = json::array();
  for (const auto& e : g.lifted_edges)
    je.push_back({{"id", e.id},
                  {"base_edge", e.base_edge},
                  {"h_l", e.h_l},
                  {"h_r", e.h_r},
                  {"v_st", e.v_st},
                  {"v_en", e.v_en},
                  {"spur", e.spur}});
  json jp = json::object();
  for (const auto& [eid, pr] : g.marginal_pairs)
    jp[std::to_string(eid)] = json::array({pr.first, pr.second});
  return json{{"base", trees::to_json(g.base)},
              {"lifted_vertices", jv},
              {"lifted_edges", je},
              {"marginal_pairs", jp},
              {"euler_characteristic", euler_characteristic(g)}};
}

}  // namespace morseflow::cover
