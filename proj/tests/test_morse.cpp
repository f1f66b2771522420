#include <catch2/catch_amalgamated.hpp>

#include "morseflow/morse.hpp"

using namespace morseflow;
using namespace morseflow::morse;
using algebra::Permutation;

namespace {

// the pair from the worked example: f0 = 2 r^2, f1 = r^2 + x1
ObjectChain example_pair() {
  ObjectChain chain;
  chain.kappa = 1;
  chain.R = 3.0;
  MorseTuple f0;
  f0.index = 0;
  f0.a = 2.0;
  f0.theta = {1.0, 0.0};
  f0.B = {0.0};
  MorseTuple f1;
  f1.index = 1;
  f1.a = 1.0;
  f1.theta = {1.0, 0.0};
  f1.B = {1.0};
  chain.objects = {f0, f1};
  return chain;
}

}  // namespace

TEST_CASE("critical point of the worked pair") {
  auto chain = example_pair();
  auto gens = critical_points(chain, 0, 1);
  REQUIRE(gens.size() == 1);
  CHECK(norm(gens[0].points[0] - Vec2{0.5, 0.0}) < 1e-12);
  CHECK(gens[0].grading == 0);  // difference is a maximum, co-index 0
  CHECK(std::abs(gens[0].action - 0.25) < 1e-12);
}

TEST_CASE("grading of saddle and minimum differences") {
  // co-index from the Hessian directly
  CHECK(coindex_of_hessian(Mat2{-2, 0, 0, -2}) == 0);  // maximum
  CHECK(coindex_of_hessian(Mat2{4, 0, 0, -2}) == 1);   // saddle contributes 1
  CHECK(coindex_of_hessian(Mat2{4, 0, 0, 2}) == 2);    // minimum contributes 2
  CHECK_THROWS(coindex_of_hessian(Mat2{0, 0, 0, 1}));

  // a saddle produced through the perturbation hook
  ObjectChain chain;
  chain.kappa = 1;
  chain.R = 3.0;
  MorseTuple f0;
  f0.index = 0;
  f0.a = 1.0;
  f0.theta = {1.0, 0.0};
  f0.B = {0.0};
  MorseTuple f1;
  f1.index = 1;
  f1.a = 0.0;
  f1.theta = {1.0, 0.0};
  f1.B = {0.0};
  QuadraticBump bump;
  bump.coeffs.push_back({3.0, 0.0, 0.0});  // difference Hessian at 0: diag(4,-2)
  f1.perturbation = bump;
  chain.objects = {f0, f1};
  auto gens = critical_points(chain, 0, 1, 1e-10);
  REQUIRE(gens.size() == 1);
  CHECK(norm(gens[0].points[0]) < 1e-12);
  CHECK(gens[0].grading == 1);
}

TEST_CASE("action is additive over sheets") {
  ObjectChain chain = make_wrapped_chain(2, 1, 3.0, 42);
  auto gens = critical_points(chain, 0, 1);
  REQUIRE(gens.size() == 2);
  for (const auto& g : gens) {
    double per_sheet = 0.0;
    for (int j = 1; j <= 2; ++j) {
      const auto& src = chain.at(0);
      const auto& dst = chain.at(1);
      per_sheet += dst.value(g.sigma.apply(j), g.points[j - 1], chain.R) -
                   src.value(j, g.points[j - 1], chain.R);
    }
    CHECK(std::abs(g.action - per_sheet) < 1e-14);
  }
}

TEST_CASE("action vanishes on coincident tuples") {
  // sigma = id, all points at a common zero of both tuples: equal summands cancel
  ObjectChain chain = example_pair();
  Generator g;
  g.src_index = 0;
  g.dst_index = 1;
  g.sigma = Permutation::identity(1);
  g.points = {Vec2{0.0, 0.0}};
  CHECK(generator_action(chain, g) == 0.0);
}

TEST_CASE("action is invariant under simultaneous sheet relabeling") {
  ObjectChain chain = make_wrapped_chain(3, 1, 3.0, 7);
  auto gens = critical_points(chain, 0, 1);
  for (const auto& g : gens) {
    // rename the source sheets by p and carry (points, sigma) along; the
    // defining sum is the same multiset of summands
    for (const auto& p : algebra::all_permutations(3)) {
      ObjectChain renamed = chain;
      for (int j = 1; j <= 3; ++j)
        renamed.objects[0].B[j - 1] = chain.objects[0].B[p.apply(j) - 1];
      Generator h = g;
      h.sigma = algebra::compose(g.sigma, p);
      for (int j = 1; j <= 3; ++j) h.points[j - 1] = g.points[p.apply(j) - 1];
      CHECK(std::abs(generator_action(renamed, h) - g.action) < 1e-12);
    }
  }
}

TEST_CASE("kappa factorial generators with grading zero") {
  for (int kappa = 1; kappa <= 3; ++kappa) {
    ObjectChain chain = make_wrapped_chain(kappa, 2, 3.0, 11 + kappa);
    REQUIRE(check_chain(chain).ok);
    int fact = 1;
    for (int i = 2; i <= kappa; ++i) fact *= i;
    for (int src = 0; src < 2; ++src)
      for (int dst = src + 1; dst <= 2; ++dst) {
        auto gens = critical_points(chain, src, dst);
        CHECK(static_cast<int>(gens.size()) == fact);
        for (const auto& g : gens) CHECK(g.grading == 0);
      }
  }
}

TEST_CASE("degenerate pair is rejected") {
  ObjectChain chain;
  chain.kappa = 1;
  chain.R = 3.0;
  MorseTuple f0;
  f0.index = 0;
  f0.a = 1.0;
  f0.theta = {1, 0};
  f0.B = {0.3};
  MorseTuple f1 = f0;
  f1.index = 1;
  f1.B = {0.5};
  chain.objects = {f0, f1};  // equal quadratic coefficients
  CHECK_THROWS(critical_points(chain, 0, 1));
}

TEST_CASE("within-tuple nonvanishing and chain checks") {
  ObjectChain good = make_wrapped_chain(3, 2, 3.0, 5);
  CHECK(check_chain(good).ok);

  ObjectChain bad = good;
  bad.objects[1].B[1] = bad.objects[1].B[0];  // duplicate within-tuple coefficient
  auto rep = check_chain(bad);
  REQUIRE_FALSE(rep.ok);
  bool cites = false;
  for (const auto& f : rep.failures)
    if (f.find("pairwise distinct") != std::string::npos) cites = true;
  CHECK(cites);

  // closed form: |grad(f_{i,j} - f_{i,k})| = |B_ij - B_ik| everywhere
  for (const auto& o : good.objects)
    for (int j = 1; j <= 3; ++j)
      for (int k = 1; k <= 3; ++k) {
        if (j == k) continue;
        Vec2 x{1.7, -2.4};
        Vec2 d = o.grad(j, x, good.R) - o.grad(k, x, good.R);
        CHECK(std::abs(norm(d) - std::abs(o.B[j - 1] - o.B[k - 1])) < 1e-12);
      }
}

TEST_CASE("gradient field descriptors") {
  ObjectChain chain = example_pair();
  // within one tuple: constant field (quadratic parts cancel)
  ObjectChain two = make_wrapped_chain(2, 1, 3.0, 3);
  auto fd = gradient_field(two, 0, 1, 0, 2);
  CHECK(fd.affine);
  CHECK(fd.c == 0.0);
  Vec2 expect = two.objects[0].theta * (two.objects[0].B[1] - two.objects[0].B[0]);
  CHECK(norm(fd.b - expect) < 1e-14);

  // identical labels: zero field
  auto fz = gradient_field(two, 0, 1, 0, 1);
  CHECK(fz.affine);
  CHECK(fz.c == 0.0);
  CHECK(norm(fz.b) < 1e-15);

  // the worked pair: A = -2 Id, b = (1, 0)
  auto fp = gradient_field(chain, 0, 1, 1, 1);
  CHECK(fp.affine);
  CHECK(fp.c == -2.0);
  CHECK(norm(fp.b - Vec2{1.0, 0.0}) < 1e-14);
}

TEST_CASE("metric perturbation vanishes outside the disk") {
  MetricConfig m;
  m.edge_perturbation[0] = Mat2{0.001, 0.0002, 0.0002, -0.0008};
  Mat2 inside = m.metric_at(0, Vec2{0.5, 0.5}, 3.0);
  CHECK(std::abs(inside.a - 1.0) > 1e-9);
  Mat2 outside = m.metric_at(0, Vec2{4.0, 0.0}, 3.0);
  CHECK(outside.a == 1.0);
  CHECK(outside.b == 0.0);
  CHECK(outside.d == 1.0);
}

TEST_CASE("chain json round trip") {
  ObjectChain chain = make_wrapped_chain(2, 2, 3.0, 99);
  chain.objects[1].perturbation = QuadraticBump{{{0.01, 0.0, -0.02}, {0.0, 0.03, 0.0}}};
  auto j = to_json(chain);
  ObjectChain back = chain_from_json(j);
  CHECK(back.kappa == chain.kappa);
  CHECK(back.R == chain.R);
  REQUIRE(back.objects.size() == chain.objects.size());
  for (std::size_t i = 0; i < chain.objects.size(); ++i) {
    CHECK(back.objects[i].a == chain.objects[i].a);
    CHECK(back.objects[i].B == chain.objects[i].B);
    CHECK(back.objects[i].perturbation.has_value() ==
          chain.objects[i].perturbation.has_value());
  }
  Vec2 x{0.3, -0.7};
  CHECK(std::abs(back.objects[1].value(1, x, 3.0) - chain.objects[1].value(1, x, 3.0)) < 1e-15);
}
