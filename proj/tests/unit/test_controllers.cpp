#include <doctest.h>

#include <cmath>
#include <iomanip>
#include <random>

#include "probsafe/controllers.hpp"
#include "probsafe/oracles.hpp"

using namespace probsafe;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Mat m1(double a) { return Mat::Constant(1, 1, a); }
BarrierSpec shifted() { return BarrierSpec::affine(v1(1.0), -1.0); }
ControlAffineSystem example_system(double s = 2.0) {
  return ControlAffineSystem::affine(m1(2.0), v1(0.0), m1(1.0), m1(s));
}
AugmentedState at(double x, double T = 10.0) { return {T, 0.0, x - 1.0, v1(x)}; }

GridSpec grid1(double xmin, double xmax, std::size_t nx, double Tmax, std::size_t nT) {
  GridSpec g;
  g.T = {0.0, Tmax, nT};
  g.x = {{xmin, xmax, nx}};
  return g;
}

std::shared_ptr<const SafeProbabilityField> constant_field(double c) {
  auto f = std::make_shared<SafeProbabilityField>();
  f->grid = grid1(-1.0, 9.0, 11, 10.0, 11);
  f->values.assign(f->grid.size(), c);
  return f;
}

std::shared_ptr<const SafeProbabilityField> example_field() {
  static const auto f = [] {
    const auto loop = linear_closed_loop(example_system(), {m1(2.5), v1(0.0)}, shifted(), {}, {});
    return std::make_shared<const SafeProbabilityField>(
        solve_cde(loop, ProbabilityType::I, grid1(-1.0, 99.0, 1001, 2.0, 21)));
  }();
  return f;
}

Policy make(PolicyKind kind, std::shared_ptr<const SafeProbabilityField> field,
            PolicyParams p = {}) {
  return Policy(kind, p, AugmentedDynamics(example_system(), shifted(), {}, {}),
                [](const Vec& x) -> Vec { return -2.5 * x; }, std::move(field));
}

SafetyCertParams cert() { return {}; }

}  // namespace

TEST_SUITE("controllers") {

TEST_CASE("nominal feedback") {
  CHECK(nominal_linear(m1(2.5), v1(3.0))[0] == -7.5);
  CHECK(nominal_linear(m1(2.5), v1(0.0))[0] == 0.0);
  CHECK(nominal_linear(m1(0.0), v1(-4.0))[0] == 0.0);
}

TEST_CASE("safety condition on constant fields") {
  const AugmentedDynamics dyn(example_system(), shifted(), {}, {});
  auto one = constant_field(1.0);
  const auto c1 = check_safety_condition(*one, dyn, at(3.0, 5.0), v1(-7.5), cert());
  CHECK(c1.satisfied);
  CHECK(c1.slack == doctest::Approx(0.1));
  auto edge = constant_field(0.9);
  const auto c2 = check_safety_condition(*edge, dyn, at(3.0, 5.0), v1(123.0), cert());
  CHECK(c2.satisfied);
  CHECK(c2.slack == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("slack is affine in u with slope L_g F") {
  const AugmentedDynamics dyn(example_system(), shifted(), {}, {});
  const auto f = example_field();
  const auto z = at(20.0, 2.0);
  const auto gp = generator_parts(*f, dyn, z);
  const double s0 = check_safety_condition(*f, dyn, z, v1(0.0), cert()).slack;
  const double s1 = check_safety_condition(*f, dyn, z, v1(1.5), cert()).slack;
  CHECK(s1 - s0 == doctest::Approx(1.5 * gp.gain[0]).epsilon(1e-12));
}

TEST_CASE("alpha validation") {
  SafetyCertParams p;
  CHECK_NOTHROW(validate_alpha(p));
  p.alpha = [](double y) { return -y; };
  CHECK_THROWS_AS(validate_alpha(p), std::invalid_argument);
  p.alpha = [](double y) { return y * y * y; };
  CHECK_THROWS_AS(validate_alpha(p), std::invalid_argument);
  p.alpha = [](double y) { return y + 0.5; };
  CHECK_THROWS_AS(validate_alpha(p), std::invalid_argument);
  p.alpha = [](double y) { return 1.0 - std::exp(-y); };
  CHECK_NOTHROW(validate_alpha(p));
}

TEST_CASE("additive policy") {
  const AffineConstraint c{v1(0.4), 1.0};
  const Vec u_nom = v1(-1.0);
  // kappa = 0 returns the nominal action.
  CHECK(additive_policy(c, u_nom, 0.0, true, 1e-12).u[0] == -1.0);
  // A satisfied condition keeps the nominal action.
  CHECK(additive_policy({v1(0.4), -1.0}, u_nom, 0.0, false, 1e-12).u[0] == -1.0);
  // Deficit 1 - 0.4 (-1) = 1.4, kappa = 1.4 / 0.16.
  const auto out = additive_policy(c, u_nom, 0.0, false, 1e-12);
  CHECK(out.u[0] == doctest::Approx(-1.0 + (1.4 / 0.16) * 0.4));
  CHECK(std::abs(c.slack(out.u)) <= 1e-9);
  CHECK(out.condition_satisfied);
  const auto stuck = additive_policy({v1(0.0), 1.0}, u_nom, 0.0, false, 1e-12);
  CHECK(stuck.fell_back);
  CHECK(stuck.u[0] == -1.0);
}

TEST_CASE("constrained optimisation in closed form") {
  const AffineConstraint c{v1(2.0), 10.0};
  const auto out = constrained_opt_policy(c, v1(1.0), m1(1.0), 1e-12);
  CHECK(out.u[0] == doctest::Approx(5.0));
  CHECK(2.0 * out.u[0] == doctest::Approx(10.0));
  CHECK(constrained_opt_policy(c, v1(7.0), m1(1.0), 1e-12).u[0] == 7.0);
  CHECK(constrained_opt_policy({v1(0.0), 1.0}, v1(7.0), m1(1.0), 1e-12).fell_back);

  // Uniform scaling of the weight leaves the projection unchanged.
  Mat H(2, 2);
  H << 2.0, 0.3, 0.3, 1.0;
  Vec a(2), u(2);
  a << 1.0, -2.0;
  u << 0.5, 0.5;
  const AffineConstraint c2{a, 4.0};
  const Vec u1 = constrained_opt_policy(c2, u, H, 1e-12).u;
  const Vec u2 = constrained_opt_policy(c2, u, 37.0 * H, 1e-12).u;
  CHECK((u1 - u2).norm() <= 1e-12);
  CHECK(std::abs(c2.slack(u1)) <= 1e-9);
}

TEST_CASE("complementarity and constraint activity on random constraints") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int r = 0; r < 500; ++r) {
    Vec a(2), un(2);
    a << nd(gen), nd(gen);
    un << nd(gen), nd(gen);
    const AffineConstraint c{a, nd(gen)};
    const auto out = constrained_opt_policy(c, un, Mat(), 1e-12);
    const bool nominal_ok = c.slack(un) >= 0.0;
    CHECK(((out.u - un).norm() == 0.0) == nominal_ok);
    if (!nominal_ok) CHECK(std::abs(c.slack(out.u)) <= 1e-9 * (1.0 + std::abs(c.b)));
  }
}

TEST_CASE("worst-case equality policy") {
  // On a constant 1 - eps field D_F = 0 for every u, so the equality holds
  // whatever is returned; the zero input gain is flagged as a fallback.
  auto p = make(PolicyKind::WorstCaseEquality, constant_field(0.9));
  const auto o = p(at(3.0, 5.0));
  CHECK(o.fell_back);
  CHECK(generator_value(*p.field(), p.dynamics(), at(3.0, 5.0), o.u) == 0.0);

  auto q = make(PolicyKind::WorstCaseEquality, example_field());
  const auto z = at(3.0, 2.0);
  const auto out = q(z);
  REQUIRE(std::isfinite(out.u[0]));
  CHECK_FALSE(out.fell_back);
  const auto chk = check_safety_condition(*q.field(), q.dynamics(), z, out.u, cert());
  CHECK(std::abs(chk.slack) <= 1e-9);
  // Regression value for the example_field grid; guards against silent drift.
  MESSAGE("worst-case u at x = 3, T = 2: " << std::setprecision(10) << out.u[0]);
  CHECK(out.u[0] == doctest::Approx(-0.359410).epsilon(1e-4));
}

TEST_CASE("stocbf hand values") {
  const auto sys = example_system();
  CHECK(stocbf_policy(sys, shifted(), v1(3.0), 1.0, v1(-7.5)).u[0] == -7.5);
  CHECK(stocbf_policy(sys, shifted(), v1(1.2), 1.0, v1(-3.0)).u[0] == doctest::Approx(-2.6));
  CHECK(stocbf_policy(sys, shifted(), v1(50.0), 1.0, v1(-125.0)).u[0] == -125.0);
}

TEST_CASE("prsbc reduces to stocbf without noise or at eps = 0.5") {
  for (double x : {1.2, 3.0, 8.0}) {
    const auto s = stocbf_constraint(example_system(0.0), shifted(), v1(x), 1.0);
    const auto p = prsbc_constraint(example_system(0.0), shifted(), v1(x), 1.0, 0.1, 0.1);
    CHECK(p.b == s.b);
    const auto s2 = stocbf_constraint(example_system(), shifted(), v1(x), 1.0);
    const auto p2 = prsbc_constraint(example_system(), shifted(), v1(x), 1.0, 0.5, 0.1);
    CHECK(p2.b == doctest::Approx(s2.b).epsilon(1e-12));
    const auto p3 = prsbc_constraint(example_system(), shifted(), v1(x), 1.0, 0.1, 0.1);
    CHECK(p3.b - s2.b == doctest::Approx(8.105).epsilon(1e-3));
    CHECK(p3.b > s2.b);
  }
  CHECK(normal_quantile(0.9) == doctest::Approx(1.2816).epsilon(1e-4));
}

TEST_CASE("cvar surrogate") {
  CHECK(gaussian_lower_cvar(0.0, 1.0, 0.1) == doctest::Approx(-1.755).epsilon(1e-3));
  CHECK(std::abs(gaussian_lower_cvar(0.0, 1.0, 0.1) - oracle::standard_normal_lower_cvar(0.1)) < 1e-12);
  CHECK(gaussian_lower_cvar(2.5, 1.0, 1.0) == doctest::Approx(2.5).epsilon(1e-12));
  // Without noise: phi + (L_f phi + u) dt >= gamma phi.
  const auto c = cvar_constraint(example_system(0.0), shifted(), v1(3.0), 0.65, 0.1, 0.1);
  CHECK(c.a[0] == doctest::Approx(0.1));
  CHECK(c.b == doctest::Approx(0.65 * 2.0 - 2.0 - 6.0 * 0.1));
  // With noise the tail term tightens the condition by sd pdf(q) / beta.
  const auto n = cvar_constraint(example_system(), shifted(), v1(3.0), 0.65, 0.1, 0.1);
  CHECK(n.b - c.b == doctest::Approx(2.0 * std::sqrt(0.1) * 1.755).epsilon(1e-3));
}

TEST_CASE("switching wrapper") {
  const auto inner = make(PolicyKind::ConstrainedOpt, example_field());
  // Far from the boundary the nominal action already meets the condition.
  const auto easy = switching_policy(inner, at(90.0, 2.0), v1(-225.0));
  CHECK(easy.u[0] == -225.0);
  CHECK_FALSE(easy.fell_back);
  const auto z = at(3.0, 2.0);
  const auto hard = switching_policy(inner, z, v1(-7.5));
  CHECK(hard.u[0] == inner(z).u[0]);
  CHECK(hard.u[0] != -7.5);

  PolicyParams pp;
  pp.switching_inner = PolicyKind::ConstrainedOpt;
  const auto sw = make(PolicyKind::Switching, constant_field(1.0), pp);
  for (double x : {0.0, 1.5, 3.0, 8.0}) CHECK(sw(at(x, 5.0)).u[0] == -2.5 * x);
}

TEST_CASE("additive modification never lowers the generator") {
  const auto f = example_field();
  const auto add = make(PolicyKind::Additive, f);
  for (double x : {1.5, 3.0, 6.0, 20.0, 60.0}) {
    const auto z = at(x, 2.0);
    const Vec un = v1(-2.5 * x);
    CHECK(generator_value(*f, add.dynamics(), z, add(z).u) >=
          generator_value(*f, add.dynamics(), z, un) - 1e-12);
  }
}

TEST_CASE("a function whose derivative is non-negative below L never drops under L") {
  // y' = g(t) with g random but forced non-negative whenever y <= L.
  std::mt19937_64 gen(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double L = nd(gen), dt = 1e-3;
    double y = L + std::abs(nd(gen)) + 1e-3;
    const double w = 1.0 + std::abs(nd(gen)) * 10.0, ph = nd(gen);
    bool ok = true;
    for (int k = 0; k < 5000; ++k) {
      double d = 5.0 * std::sin(w * k * dt + ph) + nd(gen);
      if (y <= L) d = std::max(d, 0.0);
      // Event location: a step that would cross the level stops on it, where
      // the hypothesis takes over.
      y = std::max(y + d * dt, std::min(y, L));
      ok = ok && y >= L;
    }
    CHECK(ok);
  }
}

TEST_CASE("policies are deterministic in (x, L, T)") {
  for (auto k : {PolicyKind::Additive, PolicyKind::ConstrainedOpt, PolicyKind::WorstCaseEquality,
                 PolicyKind::StoCBF, PolicyKind::PrSBC, PolicyKind::CVaR}) {
    const auto p = make(k, example_field());
    CHECK(p(at(2.5, 1.0)).u[0] == p(at(2.5, 1.0)).u[0]);
  }
  CHECK(parse_policy_kind("worst_case") == PolicyKind::WorstCaseEquality);
  CHECK_THROWS(parse_policy_kind("qp"));
}

}  // TEST_SUITE
