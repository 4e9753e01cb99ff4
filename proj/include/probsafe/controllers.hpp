#pragma once

#include <functional>
#include <memory>
#include <string_view>

#include "probsafe/cde_field.hpp"
#include "probsafe/dynamics.hpp"

namespace probsafe {

/// Tolerance epsilon and class function alpha of the probability-space
/// condition D_F >= -alpha(F - (1 - epsilon)).
struct SafetyCertParams {
  double epsilon = 0.1;
  std::function<double(double)> alpha;  // empty means y -> alpha_gain * y
  double alpha_gain = 1.0;

  double eval_alpha(double y) const { return alpha ? alpha(y) : alpha_gain * y; }
};

/// Checks on samples in [-1, 1] that alpha is increasing, concave (or linear)
/// and alpha(0) <= 0. Throws std::invalid_argument naming the failed property.
void validate_alpha(const SafetyCertParams& p);

/// a^T u >= b.
struct AffineConstraint {
  Vec a;
  double b = 0.0;

  double slack(const Vec& u) const { return a.dot(u) - b; }
};

/// The probability-space condition at z written as a^T u >= b.
AffineConstraint safety_constraint(const GeneratorParts& gp, const SafetyCertParams& p);

struct ConditionCheck {
  bool satisfied = false;
  double slack = 0.0;  // D_F + alpha(F - (1 - epsilon))
};

ConditionCheck check_safety_condition(const SafeProbabilityField& field,
                                      const AugmentedDynamics& dyn, const AugmentedState& z,
                                      const Vec& u, const SafetyCertParams& p);

/// u = -K x.
Vec nominal_linear(const Mat& K, const Vec& x);

/// Gain of the additive policy; empty means the default
/// max(0, -slack(u_N)) / |a|^2.
using KappaFn = std::function<double(const AugmentedState&)>;

/// u = u_N + kappa (L_g~F)^T. Falls back to u_N (flagged) when the gain is
/// numerically zero and the condition is violated.
StepOutcome additive_policy(const AffineConstraint& c, const Vec& u_nom, double kappa_override,
                            bool use_override, double min_gain_norm);

/// argmin (u - u_N)^T H (u - u_N) s.t. a^T u >= b, in closed form.
StepOutcome constrained_opt_policy(const AffineConstraint& c, const Vec& u_nom, const Mat& H,
                                   double min_gain_norm);

/// Minimal-norm u with a^T u = b. Falls back to u_N (flagged) when a is
/// numerically zero.
StepOutcome equality_policy(const AffineConstraint& c, const Vec& u_nom, double min_gain_norm);

/// Baseline conditions, each as a^T u >= b at state x.
/// StoCBF: L_f phi + L_g phi u + 1/2 tr(sigma sigma^T Hess phi) >= -eta phi.
AffineConstraint stocbf_constraint(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                                   const Vec& x, double eta);
/// PrSBC (one-step Gaussian surrogate): the StoCBF left side must exceed
/// -eta phi + q_{1-eps} |L_sigma phi| / sqrt(dt).
AffineConstraint prsbc_constraint(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                                  const Vec& x, double eta, double epsilon, double dt);
/// CVaR (one-step Gaussian surrogate): lower-tail CVaR_beta of
/// phi(x) + (L_f phi + L_g phi u + 1/2 tr) dt + |L_sigma phi| sqrt(dt) N(0,1)
/// must be >= gamma phi(x).
AffineConstraint cvar_constraint(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                                 const Vec& x, double gamma, double beta, double dt);

/// Lower-tail CVaR_beta of N(mean, sd^2): mean - sd pdf(q_beta) / beta.
double gaussian_lower_cvar(double mean, double sd, double beta);
/// Standard normal quantile.
double normal_quantile(double p);

StepOutcome stocbf_policy(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                          const Vec& x, double eta, const Vec& u_nom);
StepOutcome prsbc_policy(const ControlAffineSystem& sys, const BarrierSpec& barrier, const Vec& x,
                         double eta, double epsilon, double dt, const Vec& u_nom);
StepOutcome cvar_policy(const ControlAffineSystem& sys, const BarrierSpec& barrier, const Vec& x,
                        double gamma, double beta, double dt, const Vec& u_nom);

enum class PolicyKind {
  Nominal,
  Additive,
  ConstrainedOpt,
  WorstCaseEquality,
  StoCBF,
  PrSBC,
  CVaR,
  Switching
};

/// How a baseline enforces its condition: minimal deviation from the nominal
/// action, or with equality at every step.
enum class Enforcement { Projection, Equality };

std::string_view to_string(PolicyKind k);
PolicyKind parse_policy_kind(std::string_view s);

struct PolicyParams {
  SafetyCertParams cert;
  double eta = 1.0;
  double gamma = 0.65;
  double beta = 0.1;
  double dt = 0.1;
  /// Weight H of J(N, u) = (u - N)^T H (u - N); empty means identity.
  Mat J_weight;
  /// Below this norm the input gain of a condition counts as zero.
  double min_gain_norm = 1e-12;
  Enforcement baseline_enforcement = Enforcement::Projection;
  /// Safe policy used by Switching when the nominal action fails its condition.
  PolicyKind switching_inner = PolicyKind::ConstrainedOpt;
  KappaFn kappa;
};

/// Deterministic map (x, L, T) -> u.
class Policy {
 public:
  using NominalFn = std::function<Vec(const Vec&)>;

  Policy(PolicyKind kind, PolicyParams params, AugmentedDynamics dyn, NominalFn nominal,
         std::shared_ptr<const SafeProbabilityField> field = nullptr);

  PolicyKind kind() const { return kind_; }
  const PolicyParams& params() const { return params_; }
  const AugmentedDynamics& dynamics() const { return dyn_; }
  const std::shared_ptr<const SafeProbabilityField>& field() const { return field_; }

  StepOutcome operator()(const AugmentedState& z) const;
  /// The condition `kind` enforces at z (not defined for Nominal/Switching).
  AffineConstraint constraint(PolicyKind kind, const AugmentedState& z) const;
  ControlLaw law() const;

 private:
  StepOutcome enforce(PolicyKind kind, const AugmentedState& z, const Vec& u_nom) const;

  PolicyKind kind_;
  PolicyParams params_;
  AugmentedDynamics dyn_;
  NominalFn nominal_;
  std::shared_ptr<const SafeProbabilityField> field_;
};

/// Wraps the inner policy: returns the nominal action when it already meets
/// the inner policy's condition, the inner policy's output otherwise.
StepOutcome switching_policy(const Policy& inner, const AugmentedState& z, const Vec& u_nom);

}  // namespace probsafe
