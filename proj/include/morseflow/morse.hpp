#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "morseflow/algebra.hpp"
#include "morseflow/linalg.hpp"

namespace morseflow::morse {

using algebra::Permutation;
using nlohmann::json;

// Optional interior perturbation of one tuple: per sheet a quadratic form
// modulated by a C^2 bump supported in the disk of radius R.
//   p_j(x) = s(x) * (c0*x1^2 + c1*x1*x2 + c2*x2^2),  s = (1 - |x|^2/R^2)^3
struct QuadraticBump {
  std::vector<std::array<double, 3>> coeffs;  // one triple per sheet

  static double bump(const Vec2& x, double R) {
    double u = norm2(x) / (R * R);
    return u >= 1.0 ? 0.0 : std::pow(1.0 - u, 3);
  }
  static Vec2 bump_grad(const Vec2& x, double R) {
    double u = norm2(x) / (R * R);
    if (u >= 1.0) return {0, 0};
    double f = -6.0 * std::pow(1.0 - u, 2) / (R * R);
    return x * f;
  }
  static Mat2 bump_hess(const Vec2& x, double R) {
    double u = norm2(x) / (R * R);
    if (u >= 1.0) return {0, 0, 0, 0};
    double a = -6.0 * std::pow(1.0 - u, 2) / (R * R);
    double b = 24.0 * (1.0 - u) / (R * R * R * R);
    return Mat2{a + b * x.x * x.x, b * x.x * x.y, b * x.x * x.y, a + b * x.y * x.y};
  }

  double value(int sheet, const Vec2& x, double R) const {
    const auto& c = coeffs.at(sheet - 1);
    return bump(x, R) * (c[0] * x.x * x.x + c[1] * x.x * x.y + c[2] * x.y * x.y);
  }
  Vec2 grad(int sheet, const Vec2& x, double R) const {
    const auto& c = coeffs.at(sheet - 1);
    double q = c[0] * x.x * x.x + c[1] * x.x * x.y + c[2] * x.y * x.y;
    Vec2 dq{2 * c[0] * x.x + c[1] * x.y, c[1] * x.x + 2 * c[2] * x.y};
    return bump_grad(x, R) * q + dq * bump(x, R);
  }
  Mat2 hess(int sheet, const Vec2& x, double R) const {
    const auto& c = coeffs.at(sheet - 1);
    double s = bump(x, R);
    Vec2 ds = bump_grad(x, R);
    Mat2 d2s = bump_hess(x, R);
    double q = c[0] * x.x * x.x + c[1] * x.x * x.y + c[2] * x.y * x.y;
    Vec2 dq{2 * c[0] * x.x + c[1] * x.y, c[1] * x.x + 2 * c[2] * x.y};
    Mat2 d2q{2 * c[0], c[1], c[1], 2 * c[2]};
    Mat2 outer{ds.x * dq.x, ds.x * dq.y, ds.y * dq.x, ds.y * dq.y};
    Mat2 outer_t{dq.x * ds.x, dq.x * ds.y, dq.y * ds.x, dq.y * ds.y};
    return d2s * q + outer + outer_t + d2q * s;
  }
};

// One object slot in the chain: f_{i,j}(x) = a_i |x|^2 + B_{ij} <theta_i, x>
// (+ optional perturbation). a defaults to kappa - i so later objects are
// less wrapped.
struct MorseTuple {
  int index = 0;
  double a = 0.0;
  Vec2 theta{1.0, 0.0};
  std::vector<double> B;  // one per sheet, pairwise distinct
  std::optional<QuadraticBump> perturbation;

  double value(int sheet, const Vec2& x, double R) const {
    double v = a * norm2(x) + B.at(sheet - 1) * dot(theta, x);
    if (perturbation) v += perturbation->value(sheet, x, R);
    return v;
  }
  Vec2 grad(int sheet, const Vec2& x, double R) const {
    Vec2 g = x * (2.0 * a) + theta * B.at(sheet - 1);
    if (perturbation) g += perturbation->grad(sheet, x, R);
    return g;
  }
  Mat2 hess(int sheet, const Vec2& x, double R) const {
    Mat2 h = Mat2::scale(2.0 * a);
    if (perturbation) h = h + perturbation->hess(sheet, x, R);
    return h;
  }
};

struct ObjectChain {
  int kappa = 1;
  double R = 3.0;
  std::vector<MorseTuple> objects;
  std::uint64_t seed = 0;

  const MorseTuple& at(int index) const {
    for (const auto& o : objects)
      if (o.index == index) return o;
    throw std::out_of_range("ObjectChain: no object with index " + std::to_string(index));
  }
};

// Per-edge metric perturbation g = I + s(x) * M_e inside D_R; zero by default.
struct MetricConfig {
  std::map<int, Mat2> edge_perturbation;  // base edge -> constant symmetric part
  double eps_g = 1e-3;
  std::uint64_t seed = 0;

  bool trivial_on(int edge_id) const { return edge_perturbation.count(edge_id) == 0; }
  Mat2 metric_at(int edge_id, const Vec2& x, double R) const {
    auto it = edge_perturbation.find(edge_id);
    if (it == edge_perturbation.end()) return Mat2::identity();
    return Mat2::identity() + it->second * QuadraticBump::bump(x, R);
  }
};

// Morphism basis element: kappa critical points of pairwise differences,
// point j critical for f_{dst, sigma(j)} - f_{src, j}.
struct Generator {
  int src_index = 0;
  int dst_index = 0;
  Permutation sigma;
  std::vector<Vec2> points;
  int grading = 0;
  double action = 0.0;
};

inline int coindex_of_hessian(const Mat2& h, double tol = 1e-12) {
  // eigenvalues of symmetric 2x2
  double tr = h.a + h.d;
  double det = h.det();
  double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
  double l1 = tr / 2.0 - disc, l2 = tr / 2.0 + disc;
  if (std::abs(l1) < tol || std::abs(l2) < tol)
    throw std::runtime_error("degenerate Hessian: non-Morse critical point");
  int neg = (l1 < 0) + (l2 < 0);
  return 2 - neg;
}

// Difference data for one (source sheet, target sheet) pair.
struct PairDifference {
  const MorseTuple* src;
  const MorseTuple* dst;
  int src_sheet;
  int dst_sheet;
  double R;

  double value(const Vec2& x) const {
    return dst->value(dst_sheet, x, R) - src->value(src_sheet, x, R);
  }
  Vec2 grad(const Vec2& x) const {
    return dst->grad(dst_sheet, x, R) - src->grad(src_sheet, x, R);
  }
  Mat2 hess(const Vec2& x) const {
    return dst->hess(dst_sheet, x, R) + src->hess(src_sheet, x, R) * (-1.0);
  }
};

// Solves grad(f_{dst,ds} - f_{src,ss}) = 0: closed form for pure quadratics,
// Newton-refined from the quadratic solution when perturbed.
inline Vec2 critical_point_of_pair(const MorseTuple& src, const MorseTuple& dst, int src_sheet,
                                   int dst_sheet, double R, double tol_crit) {
  double c = 2.0 * (dst.a - src.a);
  if (std::abs(c) < 1e-14)
    throw std::runtime_error("degenerate Hessian: objects share the quadratic coefficient");
  Vec2 b = dst.theta * dst.B.at(dst_sheet - 1) - src.theta * src.B.at(src_sheet - 1);
  Vec2 x = b * (-1.0 / c);
  PairDifference d{&src, &dst, src_sheet, dst_sheet, R};
  if (src.perturbation || dst.perturbation) {
    for (int it = 0; it < 100; ++it) {
      Vec2 g = d.grad(x);
      if (norm(g) < tol_crit) break;
      Mat2 h = d.hess(x);
      x -= h.inverse() * g;
    }
    if (norm(d.grad(x)) > tol_crit * 100)
      throw std::runtime_error("critical point refinement did not converge");
  }
  return x;
}

inline double generator_action(const ObjectChain& chain, const Generator& g) {
  const MorseTuple& src = chain.at(g.src_index);
  const MorseTuple& dst = chain.at(g.dst_index);
  double s = 0.0;
  for (int j = 1; j <= chain.kappa; ++j) {
    s += dst.value(g.sigma.apply(j), g.points[j - 1], chain.R);
    s -= src.value(j, g.points[j - 1], chain.R);
  }
  return s;
}

inline int generator_grading(const ObjectChain& chain, const Generator& g) {
  const MorseTuple& src = chain.at(g.src_index);
  const MorseTuple& dst = chain.at(g.dst_index);
  int total = 0;
  for (int j = 1; j <= chain.kappa; ++j) {
    PairDifference d{&src, &dst, j, g.sigma.apply(j), chain.R};
    total += coindex_of_hessian(d.hess(g.points[j - 1]));
  }
  return total;
}

// One generator per permutation, in lexicographic sigma order.
inline std::vector<Generator> critical_points(const ObjectChain& chain, int src_index,
                                              int dst_index, double tol_crit = 1e-12) {
  if (src_index >= dst_index)
    throw std::invalid_argument("critical_points: src object must precede dst object");
  const MorseTuple& src = chain.at(src_index);
  const MorseTuple& dst = chain.at(dst_index);
  std::vector<Generator> out;
  for (const Permutation& sigma : algebra::all_permutations(chain.kappa)) {
    Generator g;
    g.src_index = src_index;
    g.dst_index = dst_index;
    g.sigma = sigma;
    for (int j = 1; j <= chain.kappa; ++j)
      g.points.push_back(
          critical_point_of_pair(src, dst, j, sigma.apply(j), chain.R, tol_crit));
    g.grading = generator_grading(chain, g);
    g.action = generator_action(chain, g);
    out.push_back(std::move(g));
  }
  return out;
}

inline Generator generator_for(const ObjectChain& chain, int src_index, int dst_index,
                               const Permutation& sigma, double tol_crit = 1e-12) {
  const MorseTuple& src = chain.at(src_index);
  const MorseTuple& dst = chain.at(dst_index);
  Generator g;
  g.src_index = src_index;
  g.dst_index = dst_index;
  g.sigma = sigma;
  for (int j = 1; j <= chain.kappa; ++j)
    g.points.push_back(critical_point_of_pair(src, dst, j, sigma.apply(j), chain.R, tol_crit));
  g.grading = generator_grading(chain, g);
  g.action = generator_action(chain, g);
  return g;
}

// Edge field descriptor: V = grad_g(f_{i_r,h_r} - f_{i_l,h_l}). Affine
// (V = c x + b) for the Euclidean metric on unperturbed quadratics.
struct FieldDescriptor {
  bool affine = true;
  double c = 0.0;
  Vec2 b{0, 0};
  std::function<Vec2(const Vec2&)> eval_fn;  // set when not affine

  Vec2 eval(const Vec2& x) const { return affine ? x * c + b : eval_fn(x); }
  bool has_fixed_point() const { return affine && std::abs(c) > 1e-14; }
  Vec2 fixed_point() const {
    if (!has_fixed_point()) throw std::runtime_error("field has no isolated fixed point");
    return b * (-1.0 / c);
  }
};

inline FieldDescriptor gradient_field(const ObjectChain& chain, int i_l, int h_l, int i_r, int h_r,
                                      const MetricConfig& metric = {}, int edge_id = -1) {
  const MorseTuple& left = chain.at(i_l);
  const MorseTuple& right = chain.at(i_r);
  bool pure = !left.perturbation && !right.perturbation &&
              (edge_id < 0 || metric.trivial_on(edge_id));
  FieldDescriptor f;
  if (pure) {
    f.affine = true;
    f.c = 2.0 * (right.a - left.a);
    f.b = right.theta * right.B.at(h_r - 1) - left.theta * left.B.at(h_l - 1);
    return f;
  }
  f.affine = false;
  double R = chain.R;
  f.eval_fn = [&chain, i_l, h_l, i_r, h_r, metric, edge_id, R](const Vec2& x) {
    Vec2 grad = chain.at(i_r).grad(h_r, x, R) - chain.at(i_l).grad(h_l, x, R);
    Mat2 g = metric.metric_at(edge_id, x, R);
    return g.inverse() * grad;
  };
  return f;
}

struct ChainCheckReport {
  bool ok = true;
  std::vector<std::string> failures;
  void fail(std::string m) {
    ok = false;
    failures.push_back(std::move(m));
  }
};

// Structural checks on a chain: unit directions, pairwise-distinct linear
// coefficients within a tuple, the outgoing-angle condition and the
// cross-tuple dominance condition sampled on |x| = R.
inline ChainCheckReport check_chain(const ObjectChain& chain, int samples = 64) {
  ChainCheckReport rep;
  if (chain.kappa < 1) rep.fail("kappa must be >= 1");
  for (const auto& o : chain.objects) {
    if (std::abs(norm(o.theta) - 1.0) > 1e-9)
      rep.fail("object " + std::to_string(o.index) + ": direction is not unit length");
    if (static_cast<int>(o.B.size()) != chain.kappa)
      rep.fail("object " + std::to_string(o.index) + ": wrong number of linear coefficients");
    for (std::size_t i = 0; i < o.B.size(); ++i)
      for (std::size_t j = i + 1; j < o.B.size(); ++j)
        if (std::abs(o.B[i] - o.B[j]) < 1e-9)
          rep.fail("object " + std::to_string(o.index) +
                   ": within-tuple linear coefficients are not pairwise distinct (sheets " +
                   std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
  }
  // angle and dominance checks on the circle of radius R
  for (std::size_t oi = 0; oi < chain.objects.size(); ++oi)
    for (std::size_t oj = oi + 1; oj < chain.objects.size(); ++oj) {
      const auto& fi = chain.objects[oi];
      const auto& fj = chain.objects[oj];
      for (int s = 0; s < samples; ++s) {
        double ang = 2.0 * M_PI * s / samples;
        Vec2 x{chain.R * std::cos(ang), chain.R * std::sin(ang)};
        for (int p = 1; p <= chain.kappa; ++p)
          for (int q = 1; q <= chain.kappa; ++q) {
            Vec2 d = fi.grad(p, x, chain.R) - fj.grad(q, x, chain.R);
            double radial = std::abs(dot(d, x) / chain.R);
            double tangential = std::abs(cross(d, x) / chain.R);
            if (tangential >= radial) {
              rep.fail("outgoing-angle condition fails between objects " +
                       std::to_string(fi.index) + " and " + std::to_string(fj.index));
              s = samples;  // one failure per pair is enough
              p = q = chain.kappa + 1;
            }
          }
      }
      // cross-tuple gradients dominate within-tuple gradients on |x| = R
      double min_cross = 1e300, max_within = 0.0;
      for (int s = 0; s < samples; ++s) {
        double ang = 2.0 * M_PI * s / samples;
        Vec2 x{chain.R * std::cos(ang), chain.R * std::sin(ang)};
        for (int p = 1; p <= chain.kappa; ++p)
          for (int q = 1; q <= chain.kappa; ++q) {
            min_cross = std::min(min_cross, norm(fi.grad(p, x, chain.R) - fj.grad(q, x, chain.R)));
            if (p != q) {
              max_within =
                  std::max(max_within, norm(fi.grad(p, x, chain.R) - fi.grad(q, x, chain.R)));
              max_within =
                  std::max(max_within, norm(fj.grad(p, x, chain.R) - fj.grad(q, x, chain.R)));
            }
          }
      }
      if (min_cross <= max_within)
        rep.fail("cross-tuple dominance fails between objects " + std::to_string(fi.index) +
                 " and " + std::to_string(fj.index));
    }
  return rep;
}

// Seeded wrapped chain: m+1 objects with a_i = kappa - i, spread directions
// and distinct linear coefficients.
inline ObjectChain make_wrapped_chain(int kappa, int m, double R, std::uint64_t seed) {
  ObjectChain chain;
  chain.kappa = kappa;
  chain.R = R;
  chain.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  std::uniform_real_distribution<double> bdraw(-0.85, 0.85);
  for (int i = 0; i <= m; ++i) {
    MorseTuple o;
    o.index = i;
    o.a = static_cast<double>(kappa - i);
    double ang = 0.35 + i * (2.39996322972865332 / (m + 1)) + jitter(rng);
    o.theta = {std::cos(ang), std::sin(ang)};
    for (int attempt = 0; attempt < 1000 && static_cast<int>(o.B.size()) < kappa; ++attempt) {
      double b = bdraw(rng);
      bool ok = true;
      for (double prev : o.B)
        if (std::abs(prev - b) < 0.05) ok = false;
      if (ok) o.B.push_back(b);
    }
    if (static_cast<int>(o.B.size()) != kappa)
      throw std::runtime_error("make_wrapped_chain: failed to draw distinct coefficients");
    chain.objects.push_back(std::move(o));
  }
  return chain;
}

// ---------------------------------------------------------------------------
// JSON: {kappa, R, objects:[{index, theta:[t1,t2], B:[...], perturbation}], seed}

inline json to_json(const ObjectChain& chain) {
  json jo = json::array();
  for (const auto& o : chain.objects) {
    json obj{{"index", o.index},
             {"a", o.a},
             {"theta", {o.theta.x, o.theta.y}},
             {"B", o.B}};
    if (o.perturbation) {
      json coeffs = json::array();
      for (const auto& c : o.perturbation->coeffs) coeffs.push_back({c[0], c[1], c[2]});
      obj["perturbation"] = {{"type", "quadratic_bump"}, {"coeffs", coeffs}};
    } else {
      obj["perturbation"] = "none";
    }
    jo.push_back(obj);
  }
  return json{{"kappa", chain.kappa}, {"R", chain.R}, {"objects", jo}, {"seed", chain.seed}};
}

inline ObjectChain chain_from_json(const json& j) {
  ObjectChain chain;
  chain.kappa = j.at("kappa").get<int>();
  chain.R = j.at("R").get<double>();
  chain.seed = j.value("seed", 0ULL);
  for (const auto& jo : j.at("objects")) {
    MorseTuple o;
    o.index = jo.at("index").get<int>();
    o.a = jo.contains("a") ? jo.at("a").get<double>()
                           : static_cast<double>(chain.kappa - o.index);
    auto th = jo.at("theta").get<std::vector<double>>();
    o.theta = {th.at(0), th.at(1)};
    o.B = jo.at("B").get<std::vector<double>>();
    if (jo.contains("perturbation") && jo.at("perturbation").is_object()) {
      QuadraticBump p;
      for (const auto& c : jo.at("perturbation").at("coeffs")) {
        auto v = c.get<std::vector<double>>();
        p.coeffs.push_back({v.at(0), v.at(1), v.at(2)});
      }
      o.perturbation = p;
    }
    chain.objects.push_back(std::move(o));
  }
  return chain;
}

}  // namespace morseflow::morse
