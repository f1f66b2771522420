#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "morseflow/algebra.hpp"

namespace morseflow::trees {

using algebra::Permutation;
using nlohmann::json;

enum class VertexKind { StemExterior, MarginalExterior, Internal };

inline std::string kind_name(VertexKind k) {
  switch (k) {
    case VertexKind::StemExterior: return "stem";
    case VertexKind::MarginalExterior: return "marginal";
    default: return "internal";
  }
}

inline VertexKind kind_from_name(const std::string& s) {
  if (s == "stem") return VertexKind::StemExterior;
  if (s == "marginal") return VertexKind::MarginalExterior;
  if (s == "internal") return VertexKind::Internal;
  throw std::invalid_argument("unknown vertex kind: " + s);
}

struct TreeVertex {
  int id = -1;
  VertexKind kind = VertexKind::Internal;
};

// Edges are directed toward the root vertex v0: dst is the endpoint closer
// to v0 (for the root edge e0, dst == v0 itself).
struct TreeEdge {
  int id = -1;
  int src = -1;
  int dst = -1;
  Permutation sigma;
};

// The decorated planted plane tree (T, sigma, l). The planar embedding is
// carried by the per-vertex counterclockwise cyclic orders; lengths are
// optional (they are solver unknowns, not part of tree identity).
struct FoldedRibbonTree {
  int kappa = 1;
  std::vector<TreeVertex> vertices;                // index == id
  std::vector<TreeEdge> edges;                     // index == id
  std::map<int, std::vector<int>> cyclic_order;    // internal vertex -> edge ids, [0] = outgoing
  std::vector<int> stem_labels;                    // v0, v1, ..., vm in ccw boundary order
  std::map<int, double> lengths;                   // inner + marginal edges only

  int m() const { return static_cast<int>(stem_labels.size()) - 1; }
};

using EdgePath = std::vector<int>;  // consecutive edge ids along a tree path

struct ValidationIssue {
  std::string clause;
  std::string message;
  int vertex = -1;
  int edge = -1;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;
  void fail(std::string clause, std::string message, int vertex = -1, int edge = -1) {
    ok = false;
    issues.push_back({std::move(clause), std::move(message), vertex, edge});
  }
};

// Derived structure shared by the cover construction and the solver.
// analyze() throws std::invalid_argument on structurally broken input;
// validate() reports instead.
struct TreeAnalysis {
  int root_vertex = -1;
  int root_edge = -1;
  std::vector<std::vector<int>> incident;   // vertex -> incident edge ids
  std::vector<int> parent_edge;             // vertex -> edge toward root (-1 at v0)
  std::vector<int> parent_vertex;           // vertex -> next vertex toward root
  std::vector<bool> stem_edge;              // edge -> stem flag (derived)
  std::vector<int> edge_il, edge_ir;        // boundary region labels per edge
  std::vector<int> boundary_leaves;         // exterior vertices in ccw walk order (v0 first)
  std::vector<int> marginal_leaves;         // marginal exterior vertices, ccw walk order
  std::vector<int> finite_edges;            // inner + marginal edge ids, increasing
  int m = 0;
  int xi = 0;  // number of marginal exterior vertices
};

namespace detail {

inline void check_ids(const FoldedRibbonTree& t) {
  for (std::size_t i = 0; i < t.vertices.size(); ++i)
    if (t.vertices[i].id != static_cast<int>(i))
      throw std::invalid_argument("tree: vertex ids must be dense and sorted");
  for (std::size_t i = 0; i < t.edges.size(); ++i)
    if (t.edges[i].id != static_cast<int>(i))
      throw std::invalid_argument("tree: edge ids must be dense and sorted");
}

}  // namespace detail

inline TreeAnalysis analyze(const FoldedRibbonTree& t) {
  detail::check_ids(t);
  const int nv = static_cast<int>(t.vertices.size());
  const int ne = static_cast<int>(t.edges.size());
  if (nv == 0 || ne != nv - 1) throw std::invalid_argument("tree: |E| != |V|-1");
  if (t.stem_labels.empty()) throw std::invalid_argument("tree: empty stem_labels");

  TreeAnalysis a;
  a.root_vertex = t.stem_labels[0];
  a.incident.assign(nv, {});
  for (const auto& e : t.edges) {
    if (e.src < 0 || e.src >= nv || e.dst < 0 || e.dst >= nv || e.src == e.dst)
      throw std::invalid_argument("tree: bad edge endpoints");
    a.incident[e.src].push_back(e.id);
    a.incident[e.dst].push_back(e.id);
  }
  if (a.incident[a.root_vertex].size() != 1)
    throw std::invalid_argument("tree: v0 must have exactly one incident edge");
  a.root_edge = a.incident[a.root_vertex][0];
  if (t.edges[a.root_edge].dst != a.root_vertex)
    throw std::invalid_argument("tree: root edge must point out to v0");

  // parent pointers by BFS from the root; also verifies connectivity.
  a.parent_edge.assign(nv, -1);
  a.parent_vertex.assign(nv, -1);
  std::vector<int> order{a.root_vertex};
  std::vector<bool> seen(nv, false);
  seen[a.root_vertex] = true;
  for (std::size_t k = 0; k < order.size(); ++k) {
    int v = order[k];
    for (int eid : a.incident[v]) {
      const auto& e = t.edges[eid];
      int w = e.src == v ? e.dst : e.src;
      if (seen[w]) continue;
      seen[w] = true;
      a.parent_edge[w] = eid;
      a.parent_vertex[w] = v;
      order.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != nv) throw std::invalid_argument("tree: not connected");

  // rootward orientation: each edge runs child -> parent
  for (int v : order) {
    if (v == a.root_vertex) continue;
    const auto& e = t.edges[a.parent_edge[v]];
    if (e.src != v || e.dst != a.parent_vertex[v])
      throw std::invalid_argument("tree: edge " + std::to_string(e.id) +
                                  " is not directed toward the root");
  }

  // stem edges: the subtree hanging at src contains a stem-exterior vertex
  std::vector<int> stem_below(nv, 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int v = *it;
    if (t.vertices[v].kind == VertexKind::StemExterior) stem_below[v] += 1;
    if (v != a.root_vertex) stem_below[a.parent_vertex[v]] += stem_below[v];
  }
  a.stem_edge.assign(ne, false);
  for (const auto& e : t.edges) a.stem_edge[e.id] = stem_below[e.src] > 0;

  // the planar boundary walk: depart v0 along e0; at an internal vertex
  // leave along the ccw successor of the arrival edge; at a leaf turn back.
  // Traversing rootward in boundary segment r assigns i_l = r, anti-rootward
  // assigns i_r = r; arriving at a stem leaf advances the segment.
  a.edge_il.assign(ne, -1);
  a.edge_ir.assign(ne, -1);
  int region = 0;
  int cur_vertex = a.root_vertex;
  int cur_edge = a.root_edge;
  a.boundary_leaves.push_back(a.root_vertex);
  std::size_t steps = 0;
  const std::size_t max_steps = 2 * static_cast<std::size_t>(ne) + 2;
  while (true) {
    if (++steps > max_steps) throw std::invalid_argument("tree: boundary walk does not close");
    const auto& e = t.edges[cur_edge];
    int next_vertex = e.src == cur_vertex ? e.dst : e.src;
    bool rootward = (e.src == cur_vertex);
    if (rootward)
      a.edge_il[cur_edge] = region;
    else
      a.edge_ir[cur_edge] = region;
    cur_vertex = next_vertex;
    if (cur_vertex == a.root_vertex) break;
    if (t.vertices[cur_vertex].kind == VertexKind::Internal) {
      auto it = t.cyclic_order.find(cur_vertex);
      if (it == t.cyclic_order.end())
        throw std::invalid_argument("tree: internal vertex " + std::to_string(cur_vertex) +
                                    " has no cyclic order");
      const auto& cyc = it->second;
      auto pos = std::find(cyc.begin(), cyc.end(), cur_edge);
      if (pos == cyc.end())
        throw std::invalid_argument("tree: cyclic order at vertex " + std::to_string(cur_vertex) +
                                    " misses edge " + std::to_string(cur_edge));
      ++pos;
      cur_edge = pos == cyc.end() ? cyc.front() : *pos;
    } else {
      a.boundary_leaves.push_back(cur_vertex);
      if (t.vertices[cur_vertex].kind == VertexKind::StemExterior) ++region;
      if (t.vertices[cur_vertex].kind == VertexKind::MarginalExterior)
        a.marginal_leaves.push_back(cur_vertex);
      // cur_edge unchanged: turn back along the leaf edge
    }
  }
  for (int eid = 0; eid < ne; ++eid)
    if (a.edge_il[eid] < 0 || a.edge_ir[eid] < 0)
      throw std::invalid_argument("tree: boundary walk missed edge " + std::to_string(eid));

  a.m = t.m();
  a.xi = static_cast<int>(a.marginal_leaves.size());
  for (const auto& e : t.edges) {
    bool exterior_stem = t.vertices[e.src].kind == VertexKind::StemExterior ||
                         t.vertices[e.dst].kind == VertexKind::StemExterior;
    if (!exterior_stem) a.finite_edges.push_back(e.id);
  }
  return a;
}

inline ValidationReport validate(const FoldedRibbonTree& t) {
  ValidationReport rep;
  TreeAnalysis a;
  try {
    a = analyze(t);
  } catch (const std::exception& ex) {
    rep.fail("structure", ex.what());
    return rep;
  }

  const int nv = static_cast<int>(t.vertices.size());
  if (t.kappa < 1) rep.fail("kappa", "kappa must be >= 1");
  for (const auto& e : t.edges)
    if (e.sigma.rank() != t.kappa)
      rep.fail("decoration-rank", "sigma rank differs from kappa", -1, e.id);

  for (int v = 0; v < nv; ++v) {
    std::size_t deg = a.incident[v].size();
    if (t.vertices[v].kind == VertexKind::Internal && deg < 3)
      rep.fail("internal-degree", "internal vertex has degree < 3", v);
    if (t.vertices[v].kind != VertexKind::Internal && deg != 1)
      rep.fail("exterior-degree", "exterior vertex must be a leaf", v);
  }

  // stem labels: exactly the stem-exterior vertices, in ccw boundary order
  {
    std::vector<int> found;
    for (int v : a.boundary_leaves)
      if (t.vertices[v].kind == VertexKind::StemExterior) found.push_back(v);
    if (found != t.stem_labels)
      rep.fail("stem-labels", "stem_labels do not match the ccw boundary order from v0");
    if (t.vertices[t.stem_labels[0]].kind != VertexKind::StemExterior)
      rep.fail("stem-labels", "v0 must be stem-exterior", t.stem_labels[0]);
  }

  // cyclic orders: exactly the incident edges, outgoing first
  for (int v = 0; v < nv; ++v) {
    if (t.vertices[v].kind != VertexKind::Internal) {
      if (t.cyclic_order.count(v))
        rep.fail("cyclic-order", "cyclic order given for a non-internal vertex", v);
      continue;
    }
    auto it = t.cyclic_order.find(v);
    if (it == t.cyclic_order.end()) {
      rep.fail("cyclic-order", "missing cyclic order at internal vertex", v);
      continue;
    }
    std::vector<int> cyc = it->second;
    std::vector<int> inc = a.incident[v];
    std::vector<int> sorted_cyc = cyc;
    std::sort(sorted_cyc.begin(), sorted_cyc.end());
    std::sort(inc.begin(), inc.end());
    if (sorted_cyc != inc) {
      rep.fail("cyclic-order", "cyclic order is not a permutation of the incident edges", v);
      continue;
    }
    if (cyc.empty() || t.edges[cyc[0]].src != v)
      rep.fail("cyclic-order", "first entry of the cyclic order must be the outgoing edge", v);
  }

  // vertex rule sigma(e_{v,0}) = sigma(e_{v,d-1}) ... sigma(e_{v,1})
  for (const auto& [v, cyc] : t.cyclic_order) {
    if (cyc.empty() || t.edges[cyc[0]].src != v) continue;  // reported above
    bool ranks_ok = true;
    for (int eid : cyc)
      if (t.edges[eid].sigma.rank() != t.kappa) ranks_ok = false;
    if (!ranks_ok) continue;
    Permutation prod = Permutation::identity(t.kappa);
    for (std::size_t k = 1; k < cyc.size(); ++k)
      prod = algebra::compose(t.edges[cyc[k]].sigma, prod);
    if (!(prod == t.edges[cyc[0]].sigma))
      rep.fail("vertex-product",
               "sigma of the outgoing edge differs from the ccw product of the incoming edges", v);
  }

  for (const auto& e : t.edges) {
    if (a.stem_edge[e.id]) continue;
    bool exterior = t.vertices[e.src].kind == VertexKind::MarginalExterior;
    if (exterior && !e.sigma.is_transposition())
      rep.fail("marginal-transposition", "marginal exterior edge must carry a transposition", -1,
               e.id);
    if (e.sigma.is_identity())
      rep.fail("marginal-nontrivial", "marginal edge decorated by the identity", -1, e.id);
  }

  if (!t.lengths.empty()) {
    std::set<int> have;
    for (const auto& [eid, len] : t.lengths) {
      have.insert(eid);
      if (eid < 0 || eid >= static_cast<int>(t.edges.size()))
        rep.fail("lengths", "length given for unknown edge", -1, eid);
      else if (len < 0)
        rep.fail("lengths", "negative edge length", -1, eid);
    }
    std::set<int> want(a.finite_edges.begin(), a.finite_edges.end());
    if (have != want)
      rep.fail("lengths", "length function must cover exactly the inner and marginal edges");
  }
  return rep;
}

// Region labels (i_l, i_r) per edge, read off the planar boundary walk.
inline std::map<int, std::pair<int, int>> boundary_labels(const FoldedRibbonTree& t) {
  ValidationReport rep = validate(t);
  if (!rep.ok)
    throw std::invalid_argument("boundary_labels: invalid tree (" + rep.issues[0].clause + ": " +
                                rep.issues[0].message + ")");
  TreeAnalysis a = analyze(t);
  std::map<int, std::pair<int, int>> out;
  for (const auto& e : t.edges) out[e.id] = {a.edge_il[e.id], a.edge_ir[e.id]};
  return out;
}

inline EdgePath path_edges(const FoldedRibbonTree& t, int v1, int v2) {
  TreeAnalysis a = analyze(t);
  auto root_path = [&](int v) {
    std::vector<int> p;
    while (v != a.root_vertex) {
      p.push_back(a.parent_edge[v]);
      v = a.parent_vertex[v];
    }
    return p;
  };
  std::vector<int> p1 = root_path(v1), p2 = root_path(v2);
  // drop the shared rootward tail
  while (!p1.empty() && !p2.empty() && p1.back() == p2.back()) {
    p1.pop_back();
    p2.pop_back();
  }
  EdgePath out = p1;
  out.insert(out.end(), p2.rbegin(), p2.rend());
  return out;
}

// a <= b iff a lies on the path from b to the root (vertex or edge version).
inline bool partial_order_leq_vertices(const FoldedRibbonTree& t, int a_id, int b_id) {
  TreeAnalysis a = analyze(t);
  int v = b_id;
  while (true) {
    if (v == a_id) return true;
    if (v == a.root_vertex) return false;
    v = a.parent_vertex[v];
  }
}

inline bool partial_order_leq_edges(const FoldedRibbonTree& t, int a_id, int b_id) {
  TreeAnalysis a = analyze(t);
  int e = b_id;
  while (true) {
    if (e == a_id) return true;
    int v = t.edges[e].dst;
    if (v == a.root_vertex) return false;
    e = a.parent_edge[v];
  }
}

// ---------------------------------------------------------------------------
// Enumeration of decorated topologies.

namespace detail {

struct ShapeNode {
  enum Type { Stem, Marginal, Internal } type = Stem;
  std::vector<ShapeNode> children;  // ccw order, Internal only
};

// ordered compositions of (s,q) into k parts, no (0,0) part
inline void compositions(int s, int q, int k, std::vector<std::pair<int, int>>& cur,
                         const std::function<void(const std::vector<std::pair<int, int>>&)>& emit) {
  if (k == 1) {
    if (s + q >= 1) {
      cur.push_back({s, q});
      emit(cur);
      cur.pop_back();
    }
    return;
  }
  for (int si = 0; si <= s; ++si)
    for (int qi = 0; qi <= q; ++qi) {
      if (si + qi < 1) continue;
      if ((s - si) + (q - qi) < k - 1) continue;
      cur.push_back({si, qi});
      compositions(s - si, q - qi, k - 1, cur, emit);
      cur.pop_back();
    }
}

// all planted subtree shapes with s stem leaves and q marginal leaves
inline std::vector<ShapeNode> gen_shapes(int s, int q, int max_internal) {
  std::vector<ShapeNode> out;
  if (s + q == 1) {
    ShapeNode leaf;
    leaf.type = s == 1 ? ShapeNode::Stem : ShapeNode::Marginal;
    out.push_back(leaf);
    return out;
  }
  if (s + q < 2 || max_internal < 1) return out;
  std::function<int(const ShapeNode&)> count_int = [&](const ShapeNode& n) {
    if (n.type != ShapeNode::Internal) return 0;
    int c = 1;
    for (const auto& ch : n.children) c += count_int(ch);
    return c;
  };
  for (int k = 2; k <= s + q; ++k) {
    std::vector<std::pair<int, int>> cur;
    compositions(s, q, k, cur, [&](const std::vector<std::pair<int, int>>& parts) {
      std::vector<std::vector<ShapeNode>> options;
      for (auto [si, qi] : parts) options.push_back(gen_shapes(si, qi, max_internal - 1));
      for (const auto& opt : options)
        if (opt.empty()) return;
      std::vector<std::size_t> idx(options.size(), 0);
      while (true) {
        ShapeNode node;
        node.type = ShapeNode::Internal;
        for (std::size_t i = 0; i < options.size(); ++i) node.children.push_back(options[i][idx[i]]);
        if (count_int(node) <= max_internal) out.push_back(node);
        std::size_t pos = 0;
        while (pos < idx.size()) {
          if (++idx[pos] < options[pos].size()) break;
          idx[pos] = 0;
          ++pos;
        }
        if (pos == idx.size()) break;
      }
    });
  }
  return out;
}

// materialize a shape as a FoldedRibbonTree skeleton (sigma filled later)
struct Skeleton {
  FoldedRibbonTree tree;
  std::vector<int> stem_leaf_edges;      // ccw order (edge of v1, v2, ...)
  std::vector<int> marginal_leaf_edges;  // ccw order
};

inline Skeleton materialize(const ShapeNode& root_child, int kappa) {
  Skeleton sk;
  FoldedRibbonTree& t = sk.tree;
  t.kappa = kappa;
  t.vertices.push_back({0, VertexKind::StemExterior});
  t.stem_labels.push_back(0);
  const Permutation id = Permutation::identity(kappa);

  std::function<int(const ShapeNode&, int)> build = [&](const ShapeNode& node,
                                                        int parent_vertex) -> int {
    int vid = static_cast<int>(t.vertices.size());
    VertexKind kind = node.type == ShapeNode::Stem       ? VertexKind::StemExterior
                      : node.type == ShapeNode::Marginal ? VertexKind::MarginalExterior
                                                         : VertexKind::Internal;
    t.vertices.push_back({vid, kind});
    int eid = static_cast<int>(t.edges.size());
    t.edges.push_back({eid, vid, parent_vertex, id});
    if (kind == VertexKind::StemExterior) {
      t.stem_labels.push_back(vid);
      sk.stem_leaf_edges.push_back(eid);
    } else if (kind == VertexKind::MarginalExterior) {
      sk.marginal_leaf_edges.push_back(eid);
    } else {
      std::vector<int> cyc{eid};
      // children must be created in ccw order right after the outgoing edge
      std::vector<int> child_edges;
      for (const auto& ch : node.children) child_edges.push_back(build(ch, vid));
      cyc.insert(cyc.end(), child_edges.begin(), child_edges.end());
      t.cyclic_order[vid] = cyc;
    }
    return eid;
  };
  build(root_child, 0);
  return sk;
}

// propagate sigma bottom-up from the leaf decorations; returns false when a
// marginal non-exterior edge comes out as the identity
inline bool decorate(FoldedRibbonTree& t, const TreeAnalysis& a) {
  // process vertices deepest-first (children before parents); edge sigma of
  // an internal vertex's outgoing edge is the ccw product of the others
  std::vector<int> vorder;
  std::vector<int> stack{a.root_vertex};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    vorder.push_back(v);
    for (int eid : a.incident[v])
      if (t.edges[eid].src != v && t.edges[eid].dst == v) stack.push_back(t.edges[eid].src);
  }
  for (auto it = vorder.rbegin(); it != vorder.rend(); ++it) {
    int v = *it;
    if (t.vertices[v].kind != VertexKind::Internal) continue;
    const auto& cyc = t.cyclic_order.at(v);
    Permutation prod = Permutation::identity(t.kappa);
    for (std::size_t k = 1; k < cyc.size(); ++k)
      prod = algebra::compose(t.edges[cyc[k]].sigma, prod);
    t.edges[cyc[0]].sigma = prod;
  }
  for (const auto& e : t.edges) {
    if (a.stem_edge[e.id]) continue;
    if (e.sigma.is_identity()) return false;
  }
  return true;
}

}  // namespace detail

struct EnumerateOptions {
  bool with_lengths = false;
  // cap on internal vertices; <0 means the default m + 2*max_marginal
  int max_internal = -1;
  // when set, stem leaf edge j (attached to v_{j+1}) is pinned to this sigma
  std::optional<std::vector<Permutation>> pinned_stem;
  // when set, only trees whose root edge carries this sigma are emitted
  std::optional<Permutation> output_sigma;
  // when true, keep only all-trivalent topologies (rigid dimension)
  bool trivalent_only = false;
};

// Yields every isomorphism class of valid decorated topology with m+1 stem
// leaves and at most max_marginal marginal leaves. Deterministic order.
inline void enumerate(int m, int kappa, int max_marginal,
                      const std::function<void(const FoldedRibbonTree&)>& sink,
                      const EnumerateOptions& opts = {}) {
  if (m < 1 || kappa < 1 || max_marginal < 0)
    throw std::invalid_argument("enumerate: need m >= 1, kappa >= 1, max_marginal >= 0");
  const int max_internal = opts.max_internal >= 0 ? opts.max_internal : m + 2 * max_marginal;
  std::vector<Permutation> all_sigma = algebra::all_permutations(kappa);
  std::vector<Permutation> transpositions;
  for (int v = 1; v <= kappa; ++v)
    for (int w = v + 1; w <= kappa; ++w) transpositions.push_back(algebra::transposition(v, w, kappa));

  for (int q = 0; q <= max_marginal; ++q) {
    auto shapes = detail::gen_shapes(m, q, max_internal);
    for (const auto& shape : shapes) {
      if (shape.type == detail::ShapeNode::Marginal) continue;  // root edge must be stem
      detail::Skeleton sk = detail::materialize(shape, kappa);
      TreeAnalysis a = analyze(sk.tree);
      if (opts.trivalent_only) {
        bool ok = true;
        for (const auto& [v, cyc] : sk.tree.cyclic_order)
          if (cyc.size() != 3) ok = false;
        if (!ok) continue;
      }
      // iterate decorations: stem leaf edges over S_kappa (or pinned),
      // marginal leaf edges over transpositions
      const int ns = static_cast<int>(sk.stem_leaf_edges.size());
      const int nq = static_cast<int>(sk.marginal_leaf_edges.size());
      if (kappa == 1 && nq > 0) continue;  // no transpositions exist
      std::vector<std::size_t> pick(ns + nq, 0);
      auto option_count = [&](int slot) -> std::size_t {
        if (slot < ns) return opts.pinned_stem ? 1 : all_sigma.size();
        return transpositions.size();
      };
      while (true) {
        FoldedRibbonTree t = sk.tree;
        for (int s = 0; s < ns; ++s)
          t.edges[sk.stem_leaf_edges[s]].sigma =
              opts.pinned_stem ? (*opts.pinned_stem)[s] : all_sigma[pick[s]];
        for (int qq = 0; qq < nq; ++qq)
          t.edges[sk.marginal_leaf_edges[qq]].sigma = transpositions[pick[ns + qq]];
        if (detail::decorate(t, a)) {
          bool keep = true;
          if (opts.output_sigma && !(t.edges[a.root_edge].sigma == *opts.output_sigma))
            keep = false;
          if (keep) {
            if (opts.with_lengths)
              for (int eid : a.finite_edges) t.lengths[eid] = 1.0;
            sink(t);
          }
        }
        int pos = 0;
        while (pos < ns + nq) {
          if (++pick[pos] < option_count(pos)) break;
          pick[pos] = 0;
          ++pos;
        }
        if (pos == ns + nq) break;
        if (ns + nq == 0) break;
      }
    }
  }
}

inline std::vector<FoldedRibbonTree> enumerate_all(int m, int kappa, int max_marginal,
                                                   const EnumerateOptions& opts = {}) {
  std::vector<FoldedRibbonTree> out;
  enumerate(m, kappa, max_marginal, [&](const FoldedRibbonTree& t) { out.push_back(t); }, opts);
  return out;
}

// Canonical identity key: topology + cyclic orders + sigma (lengths excluded).
inline std::string canonical_key(const FoldedRibbonTree& t) {
  std::string key = "k" + std::to_string(t.kappa) + ";";
  for (const auto& v : t.vertices) key += kind_name(v.kind)[0];
  key += ";";
  for (const auto& e : t.edges)
    key += std::to_string(e.src) + ">" + std::to_string(e.dst) + e.sigma.to_string();
  for (const auto& [v, cyc] : t.cyclic_order) {
    key += "|" + std::to_string(v) + ":";
    for (int eid : cyc) key += std::to_string(eid) + ",";
  }
  key += ";S";
  for (int v : t.stem_labels) key += std::to_string(v) + ",";
  return key;
}

// Seeded random valid decorated tree, used by property tests.
inline FoldedRibbonTree random_tree(std::mt19937_64& rng, int m, int kappa, int max_marginal) {
  auto rnd = [&](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  int xi = kappa >= 2 ? rnd(0, max_marginal) : 0;

  std::function<detail::ShapeNode(int, int)> gen = [&](int s, int q) -> detail::ShapeNode {
    if (s + q == 1) {
      detail::ShapeNode leaf;
      leaf.type = s == 1 ? detail::ShapeNode::Stem : detail::ShapeNode::Marginal;
      return leaf;
    }
    detail::ShapeNode node;
    node.type = detail::ShapeNode::Internal;
    int k = rnd(2, std::min(s + q, 4));
    // random composition with no empty part
    std::vector<std::pair<int, int>> parts(k, {0, 0});
    for (int i = 0; i < s; ++i) parts[rnd(0, k - 1)].first++;
    for (int i = 0; i < q; ++i) parts[rnd(0, k - 1)].second++;
    for (auto& p : parts)
      if (p.first + p.second == 0) return gen(s, q);  // resample on empty part
    for (const auto& p : parts) node.children.push_back(gen(p.first, p.second));
    return node;
  };

  for (int attempt = 0; attempt < 200; ++attempt) {
    detail::ShapeNode shape = gen(m, xi);
    if (shape.type == detail::ShapeNode::Marginal) continue;
    detail::Skeleton sk = detail::materialize(shape, kappa);
    TreeAnalysis a = analyze(sk.tree);
    FoldedRibbonTree t = sk.tree;
    auto all_sigma = algebra::all_permutations(kappa);
    for (int eid : sk.stem_leaf_edges)
      t.edges[eid].sigma = all_sigma[rng() % all_sigma.size()];
    std::vector<Permutation> transpositions;
    for (int v = 1; v <= kappa; ++v)
      for (int w = v + 1; w <= kappa; ++w)
        transpositions.push_back(algebra::transposition(v, w, kappa));
    for (int eid : sk.marginal_leaf_edges)
      t.edges[eid].sigma = transpositions[rng() % transpositions.size()];
    if (detail::decorate(t, a)) return t;
  }
  throw std::runtime_error("random_tree: could not decorate within the attempt budget");
}

// ---------------------------------------------------------------------------
// JSON encoding, schema:
// {kappa, vertices:[{id,kind}], edges:[{id,src,dst,sigma}],
//  cyclic_order:{vertex:[edge ids]}, stem_labels:[...], lengths:{edge:number}}

inline json to_json(const FoldedRibbonTree& t) {
  json jv = json::array();
  for (const auto& v : t.vertices) jv.push_back({{"id", v.id}, {"kind", kind_name(v.kind)}});
  json je = json::array();
  for (const auto& e : t.edges)
    je.push_back({{"id", e.id}, {"src", e.src}, {"dst", e.dst}, {"sigma", e.sigma.to_json()}});
  json jc = json::object();
  for (const auto& [v, cyc] : t.cyclic_order) jc[std::to_string(v)] = cyc;
  json jl = json::object();
  for (const auto& [eid, len] : t.lengths) jl[std::to_string(eid)] = len;
  return json{{"kappa", t.kappa},       {"vertices", jv},      {"edges", je},
              {"cyclic_order", jc},     {"stem_labels", t.stem_labels}, {"lengths", jl}};
}

inline FoldedRibbonTree tree_from_json(const json& j) {
  FoldedRibbonTree t;
  t.kappa = j.at("kappa").get<int>();
  for (const auto& v : j.at("vertices"))
    t.vertices.push_back({v.at("id").get<int>(), kind_from_name(v.at("kind").get<std::string>())});
  for (const auto& e : j.at("edges"))
    t.edges.push_back({e.at("id").get<int>(), e.at("src").get<int>(), e.at("dst").get<int>(),
                       Permutation::from_json(e.at("sigma"))});
  for (const auto& [k, v] : j.at("cyclic_order").items())
    t.cyclic_order[std::stoi(k)] = v.get<std::vector<int>>();
  t.stem_labels = j.at("stem_labels").get<std::vector<int>>();
  if (j.contains("lengths"))
    for (const auto& [k, v] : j.at("lengths").items()) t.lengths[std::stoi(k)] = v.get<double>();
  return t;
}

}  // namespace morseflow::trees
