#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "morseflow/solver.hpp"

namespace morseflow::svg {

using solver::FlowTreeSolution;

namespace detail {

inline std::string fmt(double v) {
  char buf[48];
  // fixed precision keeps byte-identical output across runs
  std::snprintf(buf, sizeof(buf), "%.6f", v + 0.0);  // +0.0 avoids "-0"
  return std::string(buf);
}

inline const char* palette(int i) {
  static const char* colors[] = {"#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#d68910",
                                 "#117864", "#7b241c", "#2471a3", "#6c3483", "#b7950b",
                                 "#148f77", "#a04000"};
  return colors[i % 12];
}

}  // namespace detail

// Renders a solved flow tree: base disk, one polyline per lifted edge sampled
// at >= 64 points, generator and fold markers, and a legend mapping colors to
// the (object, sheet) labels of each strand.
inline std::string render_solution(const solver::ShootingSystem& sys,
                                   const std::vector<double>& unknowns, double R,
                                   const std::string& meta_comment = "",
                                   int samples_per_edge = 64) {
  const auto& g = sys.graph();
  const auto& a = g.analysis;
  auto st = sys.propagate(unknowns, false);
  std::map<int, double> lengths;
  for (std::size_t k = 0; k < sys.finite_edges().size(); ++k)
    lengths[sys.finite_edges()[k]] = unknowns[2 * sys.kappa() + k];

  const double pad = 0.1 * R;
  const double world = R + pad;
  const int size = 640;
  auto X = [&](double x) { return detail::fmt((x + world) * size / (2 * world)); };
  auto Y = [&](double y) { return detail::fmt((world - y) * size / (2 * world)); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) +
         "\" height=\"" + std::to_string(size + 20 * static_cast<int>(g.lifted_edges.size()) + 30) +
         "\">\n";
  if (!meta_comment.empty()) out += "<!-- " + meta_comment + " -->\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<circle cx=\"" + X(0) + "\" cy=\"" + Y(0) + "\" r=\"" +
         detail::fmt(R * size / (2 * world)) + "\" fill=\"none\" stroke=\"#888888\" "
         "stroke-dasharray=\"6,4\"/>\n";

  for (const auto& le : g.lifted_edges) {
    const auto& V = sys.strand_field(le.id);
    std::vector<Vec2> pts;
    bool exterior_stem = !lengths.count(le.base_edge);
    if (!exterior_stem) {
      Vec2 x_start = st.have[le.v_st] ? st.pos[le.v_st] : st.fold_cand.at(le.id);
      double len = lengths.at(le.base_edge);
      for (int i = 0; i <= samples_per_edge; ++i)
        pts.push_back(solver::exp_flow(V, len * i / samples_per_edge, x_start));
    } else {
      bool is_root = le.base_edge == a.root_edge;
      Vec2 anchor = is_root ? st.pos[le.v_st] : st.pos[le.v_en];
      for (int i = 1; i <= samples_per_edge; ++i) {
        double u = static_cast<double>(i) / samples_per_edge;
        double tpar = is_root ? -std::log(u) / V.c : std::log(u) / V.c;
        pts.push_back(solver::exp_flow(V, tpar, anchor));
      }
      if (V.has_fixed_point()) pts.insert(pts.begin(), V.fixed_point());
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(le.id)) +
           "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : pts) out += X(p.x) + "," + Y(p.y) + " ";
    out += "\"/>\n";
  }

  // generator points
  for (const auto& q : sys.inputs())
    for (const auto& p : q.points)
      out += "<circle cx=\"" + X(p.x) + "\" cy=\"" + Y(p.y) +
             "\" r=\"4\" fill=\"#222222\"/>\n";
  for (const auto& p : sys.output().points)
    out += "<circle cx=\"" + X(p.x) + "\" cy=\"" + Y(p.y) +
           "\" r=\"4\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1.5\"/>\n";
  // marginal fold points
  for (const auto& [sid, p] : st.fold_cand)
    out += "<rect x=\"" + X(p.x) + "\" y=\"" + Y(p.y) +
           "\" width=\"6\" height=\"6\" transform=\"translate(-3,-3)\" fill=\"#444444\"/>\n";

  int ly = size + 16;
  for (const auto& le : g.lifted_edges) {
    int il = a.edge_il[le.base_edge], ir = a.edge_ir[le.base_edge];
    out += "<rect x=\"10\" y=\"" + std::to_string(ly - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
           std::string(detail::palette(le.id)) + "\"/>\n";
    out += "<text x=\"28\" y=\"" + std::to_string(ly) +
           "\" font-family=\"monospace\" font-size=\"12\">edge " + std::to_string(le.base_edge) +
           " strand (i_l,h_l)=(" + std::to_string(il) + "," + std::to_string(le.h_l) +
           ") (i_r,h_r)=(" + std::to_string(ir) + "," + std::to_string(le.h_r) +
           (le.spur ? ") spur" : ")") + "</text>\n";
    ly += 20;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace morseflow::svg
