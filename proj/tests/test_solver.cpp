#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "morseflow/solver.hpp"

using namespace morseflow;
using namespace morseflow::solver;
using algebra::Permutation;
using morse::Generator;
using morse::MetricConfig;
using morse::ObjectChain;
using trees::FoldedRibbonTree;
using trees::VertexKind;

namespace {

constexpr std::uint64_t kChainSeed1 = 20240601;
constexpr std::uint64_t kChainSeed2 = 20240602;

ObjectChain chain_k(int kappa) {
  return morse::make_wrapped_chain(kappa, 2, 3.0, kappa == 1 ? kChainSeed1 : kChainSeed2);
}

SolverConfig test_config() {
  SolverConfig cfg;
  cfg.max_marginal = 2;
  cfg.workers = 2;
  return cfg;
}

// independent fixed-step RK4, used only by the oracle below
Vec2 rk4_flow(const morse::FieldDescriptor& f, double t, Vec2 x, int steps) {
  double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    Vec2 k1 = f.eval(x);
    Vec2 k2 = f.eval(x + k1 * (h / 2));
    Vec2 k3 = f.eval(x + k2 * (h / 2));
    Vec2 k4 = f.eval(x + k3 * h);
    x = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
  }
  return x;
}

// dense-grid brute-force minimizer of the three stem defects for the
// kappa=1 two-input merge: flows numerically along each stem field and
// penalizes the distance to the prescribed generator points
Vec2 grid_oracle_merge_point(const ObjectChain& chain, const Generator& q1, const Generator& q2,
                             const Generator& q0) {
  auto f1 = morse::gradient_field(chain, 1, 1, 0, 1);  // input edge of v1
  auto f2 = morse::gradient_field(chain, 2, 1, 1, 1);  // input edge of v2
  auto f0 = morse::gradient_field(chain, 2, 1, 0, 1);  // output edge
  const double T = 2.0;
  auto defect = [&](const Vec2& x) {
    double d = 0.0;
    d += norm2(rk4_flow(f1, -T, x, 100) - q1.points[0]);
    d += norm2(rk4_flow(f2, -T, x, 100) - q2.points[0]);
    d += norm2(rk4_flow(f0, T, x, 100) - q0.points[0]);
    return d;
  };
  double R = chain.R;
  Vec2 best{0, 0};
  double best_val = 1e300;
  double cx = 0, cy = 0, half = R;
  const int n = 120;
  for (int level = 0; level < 6; ++level) {
    Vec2 lbest = best;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        Vec2 x{cx - half + 2.0 * half * i / n, cy - half + 2.0 * half * j / n};
        double v = defect(x);
        if (v < best_val) {
          best_val = v;
          lbest = x;
        }
      }
    best = lbest;
    cx = best.x;
    cy = best.y;
    half = 2.5 * half / n;  // refine around the winner
  }
  return best;
}

}  // namespace

TEST_CASE("exp_flow closed forms") {
  morse::FieldDescriptor zero;
  zero.affine = true;
  zero.c = 0;
  zero.b = {0, 0};
  CHECK(norm(exp_flow(zero, 5.0, Vec2{1, 2}) - Vec2{1, 2}) == 0.0);

  morse::FieldDescriptor contracting;
  contracting.affine = true;
  contracting.c = -2.0;
  contracting.b = {1, 0};
  // fixed point (1/2, 0) stays put
  CHECK(norm(exp_flow(contracting, 3.0, Vec2{0.5, 0.0}) - Vec2{0.5, 0.0}) < 1e-15);

  morse::FieldDescriptor constant;
  constant.affine = true;
  constant.c = 0;
  constant.b = {1, 0};
  CHECK(norm(exp_flow(constant, 2.0, Vec2{0, 0}) - Vec2{2, 0}) < 1e-15);

  CHECK_THROWS_AS(exp_flow(constant, std::numeric_limits<double>::quiet_NaN(), Vec2{0, 0}),
                  std::invalid_argument);
}

TEST_CASE("exp_flow integrator matches the closed form") {
  morse::FieldDescriptor affine;
  affine.affine = true;
  affine.c = -1.3;
  affine.b = {0.4, -0.2};
  morse::FieldDescriptor generic;
  generic.affine = false;
  generic.eval_fn = [&](const Vec2& x) { return x * affine.c + affine.b; };
  for (double t : {0.1, 0.7, 2.5}) {
    Vec2 a = exp_flow(affine, t, Vec2{1.0, 2.0});
    Vec2 b = exp_flow(generic, t, Vec2{1.0, 2.0});
    CHECK(norm(a - b) < 1e-10);
  }
}

TEST_CASE("dimension formula") {
  Generator g0, gin;
  g0.grading = 0;
  gin.grading = 0;
  CHECK(dimension(g0, {gin, gin}, 2) == 0);
  CHECK(dimension(g0, {gin, gin, gin}, 3) == 1);
  Generator g1 = g0;
  g1.grading = 1;
  CHECK(dimension(g1, {gin, gin}, 2) == 1);
}

TEST_CASE("constant solution of the single-edge problem has residual zero") {
  ObjectChain chain = chain_k(1);
  auto q = morse::critical_points(chain, 0, 1)[0];
  FoldedRibbonTree t;
  t.kappa = 1;
  t.vertices = {{0, VertexKind::StemExterior}, {1, VertexKind::StemExterior}};
  t.edges = {{0, 1, 0, Permutation::identity(1)}};
  t.stem_labels = {0, 1};
  auto g = cover::build_cover(t);
  ShootingSystem sys(g, chain, {}, {q}, q, test_config());
  REQUIRE(sys.consistent());
  std::vector<double> u{q.points[0].x, q.points[0].y};
  CHECK(max_abs(sys.residual(u)) < 1e-14);
}

TEST_CASE("kappa=1 merge: one rigid solution matching the grid oracle") {
  ObjectChain chain = chain_k(1);
  auto q1 = morse::critical_points(chain, 0, 1)[0];
  auto q2 = morse::critical_points(chain, 1, 2)[0];
  auto q0 = morse::critical_points(chain, 0, 2)[0];
  SolverConfig cfg = test_config();
  auto res = solve_moduli(chain, {q1, q2}, q0, cfg);
  REQUIRE(res.ok);
  CHECK(res.total_solutions == 1);
  CHECK(res.count_mod2_by_chi.at(1) == 1);
  CHECK(res.total_boundary_hits == 0);

  // the merge point is the position shared at the internal vertex
  const TopologySolve* ysolve = nullptr;
  for (const auto& topo : res.topologies)
    if (!topo.solutions.empty()) ysolve = &topo;
  REQUIRE(ysolve != nullptr);
  const auto& sol = ysolve->solutions[0];
  CHECK(sol.residual_norm < 1e-10);
  CHECK(sol.transverse);
  CHECK(sol.c0_ok);
  Vec2 merge{sol.unknowns[0], sol.unknowns[1]};
  Vec2 oracle = grid_oracle_merge_point(chain, q1, q2, q0);
  CHECK(norm(merge - oracle) < 1e-4 * chain.R);

  // strictly negative deficit with both routes agreeing
  CHECK(sol.action_deficit < -1e-6);
  CHECK(std::abs(sol.action_deficit - sol.action_deficit_quadrature) < 1e-8);
}

TEST_CASE("kappa=2 identity decorations split into independent sheets") {
  ObjectChain chain2 = chain_k(2);
  Permutation id2 = Permutation::identity(2);
  auto q1 = morse::generator_for(chain2, 0, 1, id2);
  auto q2 = morse::generator_for(chain2, 1, 2, id2);
  auto q0 = morse::generator_for(chain2, 0, 2, id2);

  // per-sheet chains for the literal residual comparison
  auto sheet_chain = [&](int sheet) {
    ObjectChain c = chain2;
    c.kappa = 1;
    for (auto& o : c.objects) o.B = {chain2.objects[o.index].B[sheet - 1]};
    return c;
  };

  // Y tree for kappa=2, all identity
  FoldedRibbonTree t;
  t.kappa = 2;
  t.vertices = {{0, VertexKind::StemExterior},
                {1, VertexKind::Internal},
                {2, VertexKind::StemExterior},
                {3, VertexKind::StemExterior}};
  t.edges = {{0, 1, 0, id2}, {1, 2, 1, id2}, {2, 3, 1, id2}};
  t.cyclic_order[1] = {0, 1, 2};
  t.stem_labels = {0, 2, 3};
  auto g = cover::build_cover(t);
  ShootingSystem sys(g, chain2, {}, {q1, q2}, q0, test_config());

  FoldedRibbonTree t1 = t;
  t1.kappa = 1;
  Permutation id1 = Permutation::identity(1);
  for (auto& e : t1.edges) e.sigma = id1;
  auto g1 = cover::build_cover(t1);

  std::vector<double> u{0.3, -0.4, 1.1, 0.7};
  auto r2 = sys.residual(u);
  for (int sheet = 1; sheet <= 2; ++sheet) {
    ObjectChain c = sheet_chain(sheet);
    auto p1 = morse::critical_points(c, 0, 1)[0];
    auto p2 = morse::critical_points(c, 1, 2)[0];
    auto p0 = morse::critical_points(c, 0, 2)[0];
    ShootingSystem sub(g1, c, {}, {p1, p2}, p0, test_config());
    std::vector<double> usub{u[2 * (sheet - 1)], u[2 * (sheet - 1) + 1]};
    auto r1 = sub.residual(usub);
    // sheet alpha occupies the alpha-th seed block of the joint residual
    CHECK(r2[2 * (sheet - 1)] == r1[0]);
    CHECK(r2[2 * (sheet - 1) + 1] == r1[1]);
  }

  // and the counts factor: one rigid joint solution with chi = 2
  auto res = solve_moduli(chain2, {q1, q2}, q0, test_config());
  REQUIRE(res.ok);
  CHECK(res.total_solutions == 1);
  CHECK(res.count_mod2_by_chi.at(2) == 1);
}

TEST_CASE("kappa=2 fold topology agrees with the hand-reduced linear system") {
  ObjectChain chain = chain_k(2);
  Permutation s = algebra::transposition(1, 2, 2);
  Permutation id = Permutation::identity(2);
  auto q1 = morse::generator_for(chain, 0, 1, s);
  auto q2 = morse::generator_for(chain, 1, 2, s);
  auto q0 = morse::generator_for(chain, 0, 2, s);

  // marginal fold on the v1 line, region-0 side:
  // v0=0, u1=1, u2=2, v1=3, v2=4, w=5
  FoldedRibbonTree t;
  t.kappa = 2;
  t.vertices = {{0, VertexKind::StemExterior}, {1, VertexKind::Internal},
                {2, VertexKind::Internal},     {3, VertexKind::StemExterior},
                {4, VertexKind::StemExterior}, {5, VertexKind::MarginalExterior}};
  // e0: u1->v0, g: u2->u1, e2: v2->u1, e1': v1->u2, e_m: w->u2
  t.edges = {{0, 1, 0, s}, {1, 2, 1, id}, {2, 4, 1, s}, {3, 3, 2, s}, {4, 5, 2, s}};
  t.cyclic_order[1] = {0, 1, 2};
  t.cyclic_order[2] = {1, 4, 3};
  t.stem_labels = {0, 3, 4};
  REQUIRE(trees::validate(t).ok);

  // hand-reduced 2x2 system: rho' + lambda (v - rho') + 2 l beta0 theta0 = 0
  double b01 = chain.objects[0].B[0], b02 = chain.objects[0].B[1];
  double b11 = chain.objects[1].B[0], b12 = chain.objects[1].B[1];
  double b21 = chain.objects[2].B[0], b22 = chain.objects[2].B[1];
  Vec2 th0 = chain.objects[0].theta, th1 = chain.objects[1].theta,
       th2 = chain.objects[2].theta;
  double beta0 = b02 - b01, beta1 = b12 - b11, beta2 = b22 - b21;
  Vec2 v = (th2 * beta2 + th0 * beta0) / 4.0;
  Vec2 rho = (th0 * beta0 - th1 * beta1) / 2.0;
  // columns (v - rho | 2 beta0 theta0), rhs -rho
  Matrix M(2, 2);
  M(0, 0) = (v - rho).x;
  M(1, 0) = (v - rho).y;
  M(0, 1) = 2.0 * beta0 * th0.x;
  M(1, 1) = 2.0 * beta0 * th0.y;
  std::vector<double> sol;
  REQUIRE(lu_solve(M, {-rho.x, -rho.y}, sol));
  double lambda = sol[0], lmar = sol[1];
  bool admissible = lambda > 0.0 && lambda <= 1.0 && lmar >= 0.0;

  SolverConfig cfg = test_config();
  auto topo = solve_topology(t, chain, {q1, q2}, q0, cfg);
  REQUIRE(topo.solved);
  if (admissible) {
    REQUIRE(topo.solutions.size() == 1);
    const auto& found = topo.solutions[0];
    double lg = found.lengths.at(1);
    double lm = found.lengths.at(4);
    CHECK(std::abs(std::exp(-2.0 * lg) - lambda) < 1e-8);
    CHECK(std::abs(lm - lmar) < 1e-8);
    CHECK(found.transverse);
    CHECK(found.action_deficit <= 1e-9);
  } else {
    CHECK(topo.solutions.empty());
  }
}

TEST_CASE("analytic jacobian matches central differences") {
  ObjectChain chain = chain_k(2);
  Permutation s = algebra::transposition(1, 2, 2);
  auto q1 = morse::generator_for(chain, 0, 1, s);
  auto q2 = morse::generator_for(chain, 1, 2, s);
  trees::EnumerateOptions opts;
  opts.pinned_stem = std::vector<Permutation>{s, s};
  auto cands = trees::enumerate_all(2, 2, 1, opts);
  std::mt19937_64 rng(555);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  int tested = 0;
  for (const auto& t : cands) {
    auto g = cover::build_cover(t);
    trees::TreeAnalysis a = trees::analyze(t);
    Permutation s0 = t.edges[a.root_edge].sigma;
    auto q0 = morse::generator_for(chain, 0, 2, s0);
    ShootingSystem sys(g, chain, {}, {q1, q2}, q0, test_config());
    if (!sys.consistent() || sys.expected_dim() != 0) continue;
    const int n = sys.n_unknowns();
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> u(n);
      for (int k = 0; k < 2 * sys.kappa(); ++k) u[k] = 2.0 * dist(rng);
      for (int k = 2 * sys.kappa(); k < n; ++k) u[k] = 0.3 + 2.0 * std::abs(dist(rng));
      Matrix J = sys.jacobian(u);
      double scale = 0.0, err = 0.0;
      for (int col = 0; col < n; ++col) {
        double h = 1e-6 * std::max(1.0, std::abs(u[col]));
        std::vector<double> up = u, um = u;
        up[col] += h;
        um[col] -= h;
        auto rp = sys.residual(up);
        auto rm = sys.residual(um);
        for (int row = 0; row < n; ++row) {
          double fd = (rp[row] - rm[row]) / (2 * h);
          err = std::max(err, std::abs(fd - J(row, col)));
          scale = std::max(scale, std::abs(J(row, col)));
        }
      }
      CHECK(err <= 1e-6 * std::max(scale, 1.0));
      ++tested;
    }
  }
  CHECK(tested >= 100);
}

TEST_CASE("accepted solutions satisfy the bounds") {
  ObjectChain chain = chain_k(2);
  Permutation s = algebra::transposition(1, 2, 2);
  auto q1 = morse::generator_for(chain, 0, 1, s);
  auto q2 = morse::generator_for(chain, 1, 2, s);
  SolverConfig cfg = test_config();
  for (const Permutation& s0 : algebra::all_permutations(2)) {
    auto q0 = morse::generator_for(chain, 0, 2, s0);
    auto res = solve_moduli(chain, {q1, q2}, q0, cfg);
    REQUIRE(res.ok);
    CHECK(res.total_boundary_hits == 0);
    for (const auto& topo : res.topologies)
      for (const auto& sol : topo.solutions) {
        CHECK(sol.residual_norm <= cfg.tol_residual);
        CHECK(sol.action_deficit <= 1e-9);
        CHECK(std::abs(sol.action_deficit - sol.action_deficit_quadrature) < 1e-8);
        CHECK(sol.c0_ok);
        CHECK(sol.transverse);
        for (const auto& [eid, len] : sol.lengths) CHECK(len > 0.0);
      }
  }
}

TEST_CASE("constant solution has zero deficit") {
  ObjectChain chain = chain_k(1);
  auto q = morse::critical_points(chain, 0, 1)[0];
  FoldedRibbonTree t;
  t.kappa = 1;
  t.vertices = {{0, VertexKind::StemExterior}, {1, VertexKind::StemExterior}};
  t.edges = {{0, 1, 0, Permutation::identity(1)}};
  t.stem_labels = {0, 1};
  auto g = cover::build_cover(t);
  ShootingSystem sys(g, chain, {}, {q}, q, test_config());
  std::vector<double> u{q.points[0].x, q.points[0].y};
  auto ad = action_deficit(sys, u);
  CHECK(std::abs(ad.generator_side) < 1e-12);
  CHECK(std::abs(ad.quadrature_side) < 1e-12);
  CHECK(c0_bound_check(sys, u, chain.R));
}

TEST_CASE("c0 check fails outside the disk") {
  ObjectChain chain = chain_k(1);
  auto q1 = morse::critical_points(chain, 0, 1)[0];
  auto q2 = morse::critical_points(chain, 1, 2)[0];
  auto q0 = morse::critical_points(chain, 0, 2)[0];
  auto cands = trees::enumerate_all(2, 1, 0);
  auto g = cover::build_cover(cands[0]);
  ShootingSystem sys(g, chain, {}, {q1, q2}, q0, test_config());
  // artificial configuration far outside the disk
  std::vector<double> u{2.5 * chain.R, 0.0};
  CHECK_FALSE(c0_bound_check(sys, u, chain.R));
}

TEST_CASE("solver output is deterministic across worker counts") {
  ObjectChain chain = chain_k(2);
  Permutation s = algebra::transposition(1, 2, 2);
  auto q1 = morse::generator_for(chain, 0, 1, s);
  auto q2 = morse::generator_for(chain, 1, 2, s);
  auto q0 = morse::generator_for(chain, 0, 2, s);
  SolverConfig cfg1 = test_config();
  cfg1.workers = 1;
  SolverConfig cfg4 = test_config();
  cfg4.workers = 4;
  auto r1 = solve_moduli(chain, {q1, q2}, q0, cfg1);
  auto r4 = solve_moduli(chain, {q1, q2}, q0, cfg4);
  CHECK(r1.count_mod2_by_chi == r4.count_mod2_by_chi);
  REQUIRE(r1.topologies.size() == r4.topologies.size());
  for (std::size_t i = 0; i < r1.topologies.size(); ++i) {
    REQUIRE(r1.topologies[i].solutions.size() == r4.topologies[i].solutions.size());
    for (std::size_t k = 0; k < r1.topologies[i].solutions.size(); ++k)
      CHECK(r1.topologies[i].solutions[k].unknowns == r4.topologies[i].solutions[k].unknowns);
  }
}
