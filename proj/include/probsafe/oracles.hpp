#pragma once

#include <string>
#include <vector>

namespace probsafe {

/// One closed-form check: the library's value against an independently
/// derived reference.
struct OracleResult {
  std::string name;
  double expected = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Reference values computed without the library's own numerics.
namespace oracle {
/// P(no exit) for driftless Brownian motion sigma W started at distance d
/// above the boundary, over horizon T: 2 Phi(d / (sigma sqrt(T))) - 1.
double reflection_survival(double d, double sigma, double T);
/// Its derivative with respect to d.
double reflection_survival_ddist(double d, double sigma, double T);
/// Standard normal quantile by bisection on erfc.
double normal_quantile_bisect(double p);
/// Lower-tail CVaR of N(0, 1) at level beta: -pdf(q_beta) / beta.
double standard_normal_lower_cvar(double beta);
}  // namespace oracle

/// Runs the oracle suite; `fast` trims the Monte Carlo sample counts.
std::vector<OracleResult> run_oracle_suite(bool fast = false);

}  // namespace probsafe
