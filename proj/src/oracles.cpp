#include "probsafe/oracles.hpp"

#include <cmath>
#include <numbers>

#include "probsafe/cde_field.hpp"
#include "probsafe/controllers.hpp"
#include "probsafe/safety_prob.hpp"

namespace probsafe {

namespace oracle {

namespace {
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}
}  // namespace

double reflection_survival(double d, double sigma, double T) {
  if (d < 0.0) return 0.0;
  return 2.0 * std_normal_cdf(d / (sigma * std::sqrt(T))) - 1.0;
}

double reflection_survival_ddist(double d, double sigma, double T) {
  if (d < 0.0) return 0.0;
  const double s = sigma * std::sqrt(T);
  return 2.0 * std_normal_pdf(d / s) / s;
}

double normal_quantile_bisect(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double standard_normal_lower_cvar(double beta) {
  return -std_normal_pdf(normal_quantile_bisect(beta)) / beta;
}

}  // namespace oracle

namespace {

OracleResult check(std::string name, double expected, double observed, double tol) {
  return {std::move(name), expected, observed, tol, std::abs(observed - expected) <= tol};
}

ClosedLoop driftless_loop() {
  auto sys = ControlAffineSystem::affine(Mat::Zero(1, 1), Vec::Zero(1), Mat::Zero(1, 1),
                                         Mat::Constant(1, 1, 2.0));
  return linear_closed_loop(std::move(sys), {Mat::Zero(1, 1), Vec::Zero(1)},
                            BarrierSpec::affine(Vec::Constant(1, 1.0), -1.0), {}, {});
}

}  // namespace

std::vector<OracleResult> run_oracle_suite(bool fast) {
  std::vector<OracleResult> out;
  const double reflection = oracle::reflection_survival(2.0, 2.0, 1.0);

  {
    EnsembleOptions eo;
    eo.dt = 1e-3;
    eo.n_samples = fast ? 20000 : 100000;
    eo.seed = 20240601;
    const auto est =
        mc_probability(driftless_loop(), ProbabilityType::II, Vec::Constant(1, 3.0), 0.0, 1.0, eo);
    out.push_back(check("mc type II vs reflection principle", reflection, est.value, 0.02));
  }
  {
    GridSpec g;
    g.T = {0.0, 1.0, 101};
    // Node spacing 0.01 with the first node just below the boundary, so it is
    // the only pinned one.
    g.x = {{0.99, 13.0, 1202}};
    const auto f = solve_cde(driftless_loop(), ProbabilityType::II, g);
    const double v = field_value(f, AugmentedState{1.0, 0.0, 2.0, Vec::Constant(1, 3.0)});
    out.push_back(check("cde type II vs reflection principle", reflection, v, 0.01));
    const double slope = field_gradient(f, AugmentedState{1.0, 0.0, 2.0, Vec::Constant(1, 3.0)})[kZX];
    const double ref = oracle::reflection_survival_ddist(2.0, 2.0, 1.0);
    out.push_back(check("cde gradient vs reflection derivative (relative)", 0.0,
                        (slope - ref) / ref, 0.02));
  }
  {
    auto sys = ControlAffineSystem::affine(Mat::Constant(1, 1, 2.0), Vec::Zero(1),
                                           Mat::Constant(1, 1, 1.0), Mat::Zero(1, 1));
    const auto bar = BarrierSpec::affine(Vec::Constant(1, 1.0), -1.0);
    const ControlLaw law = [](const AugmentedState& z) {
      StepOutcome o;
      o.u = -2.5 * z.x;
      return o;
    };
    const auto tr = simulate(sys, law, bar, {}, {}, Vec::Constant(1, 3.0), 1e-4, 2.0, 1);
    out.push_back(check("noise-free closed loop vs 3 exp(-t/2) at t = 2", 3.0 * std::exp(-1.0),
                        tr.states.back()[0], 1e-3));
    const auto tr2 = simulate(sys, law, bar, {}, {}, Vec::Constant(1, 3.0), 1e-3, 4.0, 1);
    out.push_back(check("first exit time vs 2 ln 3", 2.0 * std::log(3.0),
                        first_exit_time(tr2, bar, 0.0), 1e-3));
  }
  out.push_back(check("normal quantile 0.9 vs bisection", oracle::normal_quantile_bisect(0.9),
                      normal_quantile(0.9), 1e-9));
  out.push_back(check("gaussian lower CVaR at beta = 0.1", oracle::standard_normal_lower_cvar(0.1),
                      gaussian_lower_cvar(0.0, 1.0, 0.1), 1e-9));
  {
    auto sys = ControlAffineSystem::affine(Mat::Constant(1, 1, 2.0), Vec::Zero(1),
                                           Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 2.0));
    const auto bar = BarrierSpec::affine(Vec::Constant(1, 1.0), -1.0);
    const Vec x = Vec::Constant(1, 3.0);
    const double extra =
        prsbc_constraint(sys, bar, x, 1.0, 0.1, 0.1).b - stocbf_constraint(sys, bar, x, 1.0).b;
    out.push_back(check("prsbc quantile term at eps = 0.1, dt = 0.1",
                        oracle::normal_quantile_bisect(0.9) * 2.0 / std::sqrt(0.1), extra, 1e-9));
    out.push_back(check("f_phi for phi = x - 1, f = 2x at x = 3", 2.0 * 3.0, f_phi(sys, bar, x), 1e-12));
  }
  return out;
}

}  // namespace probsafe
