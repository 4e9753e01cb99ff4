#include "probsafe/controllers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/normal.hpp>

namespace probsafe {

void validate_alpha(const SafetyCertParams& p) {
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0))
    throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!p.alpha && !(p.alpha_gain > 0.0))
    throw std::invalid_argument("linear alpha needs a positive gain");
  if (p.eval_alpha(0.0) > 1e-12) throw std::invalid_argument("alpha(0) must be <= 0");
  constexpr int kSamples = 41;
  double prev = p.eval_alpha(-1.0);
  for (int i = 1; i < kSamples; ++i) {
    const double y = -1.0 + 2.0 * i / (kSamples - 1);
    const double v = p.eval_alpha(y);
    if (!(v > prev)) throw std::invalid_argument("alpha must be monotonically increasing");
    prev = v;
  }
  for (int i = 1; i + 1 < kSamples; ++i) {
    const double h = 2.0 / (kSamples - 1);
    const double y = -1.0 + h * i;
    const double mid = p.eval_alpha(y);
    const double chord = 0.5 * (p.eval_alpha(y - h) + p.eval_alpha(y + h));
    if (mid < chord - 1e-9 * (1.0 + std::abs(chord)))
      throw std::invalid_argument("alpha must be concave or linear");
  }
}

AffineConstraint safety_constraint(const GeneratorParts& gp, const SafetyCertParams& p) {
  return {gp.gain, -p.eval_alpha(gp.F - (1.0 - p.epsilon)) - gp.drift - gp.diffusion};
}

ConditionCheck check_safety_condition(const SafeProbabilityField& field,
                                      const AugmentedDynamics& dyn, const AugmentedState& z,
                                      const Vec& u, const SafetyCertParams& p) {
  const GeneratorParts gp = generator_parts(field, dyn, z);
  const double slack = gp.value(u) + p.eval_alpha(gp.F - (1.0 - p.epsilon));
  return {slack >= 0.0, slack};
}

Vec nominal_linear(const Mat& K, const Vec& x) { return -K * x; }

namespace {

StepOutcome fallback(const AffineConstraint& c, const Vec& u_nom) {
  StepOutcome out;
  out.u = u_nom;
  out.slack = c.slack(u_nom);
  out.condition_satisfied = out.slack >= 0.0;
  out.fell_back = true;
  return out;
}

StepOutcome unchanged(const AffineConstraint& c, const Vec& u_nom) {
  StepOutcome out;
  out.u = u_nom;
  out.slack = c.slack(u_nom);
  out.condition_satisfied = true;
  return out;
}

StepOutcome modified(const AffineConstraint& c, Vec u) {
  StepOutcome out;
  out.slack = c.slack(u);
  // The target is the boundary a^T u = b; rounding may leave a tiny negative.
  out.condition_satisfied = out.slack >= -1e-9 * (1.0 + std::abs(c.b));
  out.u = std::move(u);
  return out;
}

}  // namespace

StepOutcome additive_policy(const AffineConstraint& c, const Vec& u_nom, double kappa_override,
                            bool use_override, double min_gain_norm) {
  const double s = c.slack(u_nom);
  const double n2 = c.a.squaredNorm();
  if (use_override) {
    if (kappa_override < 0.0) throw std::invalid_argument("kappa must be non-negative");
    if (kappa_override == 0.0 || n2 == 0.0)
      return s >= 0.0 ? unchanged(c, u_nom) : fallback(c, u_nom);
    return modified(c, u_nom + kappa_override * c.a);
  }
  if (s >= 0.0) return unchanged(c, u_nom);
  if (std::sqrt(n2) <= min_gain_norm) return fallback(c, u_nom);
  const double kappa = -s / n2;
  return modified(c, u_nom + kappa * c.a);
}

StepOutcome constrained_opt_policy(const AffineConstraint& c, const Vec& u_nom, const Mat& H,
                                   double min_gain_norm) {
  const double s = c.slack(u_nom);
  if (s >= 0.0) return unchanged(c, u_nom);
  if (c.a.norm() <= min_gain_norm) return fallback(c, u_nom);
  Vec Hinv_a;
  if (H.size() == 0) {
    Hinv_a = c.a;
  } else {
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("J weight must be positive definite");
    Hinv_a = llt.solve(c.a);
  }
  const double denom = c.a.dot(Hinv_a);
  return modified(c, u_nom + (-s / denom) * Hinv_a);
}

StepOutcome equality_policy(const AffineConstraint& c, const Vec& u_nom, double min_gain_norm) {
  const double n2 = c.a.squaredNorm();
  if (std::sqrt(n2) <= min_gain_norm) return fallback(c, u_nom);
  StepOutcome out = modified(c, (c.b / n2) * c.a);
  return out;
}

namespace {

struct BarrierTerms {
  double phi;
  double lf;   // L_f phi + 1/2 tr(sigma sigma^T Hess phi)
  Vec lg;      // (L_g phi)^T
  double ls;   // |L_sigma phi|
};

BarrierTerms barrier_terms(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                           const Vec& x) {
  const Vec grad = barrier.grad(x);
  const Mat sig = sys.diffusion(x);
  BarrierTerms t;
  t.phi = barrier.phi(x);
  t.lf = f_phi(sys, barrier, x);
  t.lg = sys.input_matrix(x).transpose() * grad;
  t.ls = (sig.transpose() * grad).norm();
  return t;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double gaussian_lower_cvar(double mean, double sd, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0, 1]");
  if (beta == 1.0 || sd == 0.0) return mean;
  const boost::math::normal_distribution<double> n;
  return mean - sd * boost::math::pdf(n, boost::math::quantile(n, beta)) / beta;
}

AffineConstraint stocbf_constraint(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                                   const Vec& x, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  const BarrierTerms t = barrier_terms(sys, barrier, x);
  return {t.lg, -eta * t.phi - t.lf};
}

AffineConstraint prsbc_constraint(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                                  const Vec& x, double eta, double epsilon, double dt) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  AffineConstraint c = stocbf_constraint(sys, barrier, x, eta);
  const BarrierTerms t = barrier_terms(sys, barrier, x);
  if (t.ls != 0.0) c.b += normal_quantile(1.0 - epsilon) * t.ls / std::sqrt(dt);
  return c;
}

AffineConstraint cvar_constraint(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                                 const Vec& x, double gamma, double beta, double dt) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const BarrierTerms t = barrier_terms(sys, barrier, x);
  // CVaR = phi + (lf + lg u) dt - tail, with tail = mean - CVaR of the noise.
  const double tail = -gaussian_lower_cvar(0.0, t.ls * std::sqrt(dt), beta);
  return {t.lg * dt, gamma * t.phi - t.phi - t.lf * dt + tail};
}

StepOutcome stocbf_policy(const ControlAffineSystem& sys, const BarrierSpec& barrier,
                          const Vec& x, double eta, const Vec& u_nom) {
  return constrained_opt_policy(stocbf_constraint(sys, barrier, x, eta), u_nom, Mat(), 1e-12);
}

StepOutcome prsbc_policy(const ControlAffineSystem& sys, const BarrierSpec& barrier, const Vec& x,
                         double eta, double epsilon, double dt, const Vec& u_nom) {
  return constrained_opt_policy(prsbc_constraint(sys, barrier, x, eta, epsilon, dt), u_nom, Mat(),
                                1e-12);
}

StepOutcome cvar_policy(const ControlAffineSystem& sys, const BarrierSpec& barrier, const Vec& x,
                        double gamma, double beta, double dt, const Vec& u_nom) {
  return constrained_opt_policy(cvar_constraint(sys, barrier, x, gamma, beta, dt), u_nom, Mat(),
                                1e-12);
}

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Nominal: return "nominal";
    case PolicyKind::Additive: return "additive";
    case PolicyKind::ConstrainedOpt: return "constrained_opt";
    case PolicyKind::WorstCaseEquality: return "worst_case";
    case PolicyKind::StoCBF: return "stocbf";
    case PolicyKind::PrSBC: return "prsbc";
    case PolicyKind::CVaR: return "cvar";
    case PolicyKind::Switching: return "switching";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view s) {
  for (PolicyKind k : {PolicyKind::Nominal, PolicyKind::Additive, PolicyKind::ConstrainedOpt,
                       PolicyKind::WorstCaseEquality, PolicyKind::StoCBF, PolicyKind::PrSBC,
                       PolicyKind::CVaR, PolicyKind::Switching})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown policy kind '" + std::string(s) + "'");
}

Policy::Policy(PolicyKind kind, PolicyParams params, AugmentedDynamics dyn, NominalFn nominal,
               std::shared_ptr<const SafeProbabilityField> field)
    : kind_(kind),
      params_(std::move(params)),
      dyn_(std::move(dyn)),
      nominal_(std::move(nominal)),
      field_(std::move(field)) {
  if (!nominal_) throw std::invalid_argument("policy needs a nominal controller");
  validate_alpha(params_.cert);
  auto uses_field = [](PolicyKind k) {
    return k == PolicyKind::Additive || k == PolicyKind::ConstrainedOpt ||
           k == PolicyKind::WorstCaseEquality;
  };
  if (kind_ == PolicyKind::Switching &&
      (params_.switching_inner == PolicyKind::Switching ||
       params_.switching_inner == PolicyKind::Nominal))
    throw std::invalid_argument("switching needs a safe inner policy");
  const bool need_field =
      uses_field(kind_) || (kind_ == PolicyKind::Switching && uses_field(params_.switching_inner));
  if (need_field && !field_) throw std::invalid_argument("policy needs a safe-probability field");
  if (field_ && static_cast<int>(field_->grid.x.size()) != dyn_.system().dim_state())
    throw std::invalid_argument("field grid does not match the system dimension");
}

AffineConstraint Policy::constraint(PolicyKind kind, const AugmentedState& z) const {
  const auto& sys = dyn_.system();
  const auto& bar = dyn_.barrier();
  switch (kind) {
    case PolicyKind::Additive:
    case PolicyKind::ConstrainedOpt:
    case PolicyKind::WorstCaseEquality:
      return safety_constraint(generator_parts(*field_, dyn_, z), params_.cert);
    case PolicyKind::StoCBF: return stocbf_constraint(sys, bar, z.x, params_.eta);
    case PolicyKind::PrSBC:
      return prsbc_constraint(sys, bar, z.x, params_.eta, params_.cert.epsilon, params_.dt);
    case PolicyKind::CVaR:
      return cvar_constraint(sys, bar, z.x, params_.gamma, params_.beta, params_.dt);
    default: throw std::logic_error("policy kind has no safety condition");
  }
}

StepOutcome Policy::enforce(PolicyKind kind, const AugmentedState& z, const Vec& u_nom) const {
  const AffineConstraint c = constraint(kind, z);
  const double thr = params_.min_gain_norm;
  switch (kind) {
    case PolicyKind::Additive:
      if (params_.kappa) return additive_policy(c, u_nom, params_.kappa(z), true, thr);
      return additive_policy(c, u_nom, 0.0, false, thr);
    case PolicyKind::ConstrainedOpt: return constrained_opt_policy(c, u_nom, params_.J_weight, thr);
    case PolicyKind::WorstCaseEquality: return equality_policy(c, u_nom, thr);
    default:
      if (params_.baseline_enforcement == Enforcement::Equality)
        return equality_policy(c, u_nom, thr);
      return constrained_opt_policy(c, u_nom, params_.J_weight, thr);
  }
}

StepOutcome Policy::operator()(const AugmentedState& z) const {
  const Vec u_nom = nominal_(z.x);
  switch (kind_) {
    case PolicyKind::Nominal: {
      StepOutcome out;
      out.u = u_nom;
      return out;
    }
    case PolicyKind::Switching: {
      const AffineConstraint c = constraint(params_.switching_inner, z);
      const double s = c.slack(u_nom);
      if (s >= 0.0) {
        StepOutcome out;
        out.u = u_nom;
        out.slack = s;
        return out;
      }
      return enforce(params_.switching_inner, z, u_nom);
    }
    default: return enforce(kind_, z, u_nom);
  }
}

ControlLaw Policy::law() const {
  auto self = std::make_shared<const Policy>(*this);
  return [self](const AugmentedState& z) { return (*self)(z); };
}

StepOutcome switching_policy(const Policy& inner, const AugmentedState& z, const Vec& u_nom) {
  if (inner.kind() == PolicyKind::Nominal || inner.kind() == PolicyKind::Switching)
    throw std::invalid_argument("switching needs a safe inner policy");
  const AffineConstraint c = inner.constraint(inner.kind(), z);
  const double s = c.slack(u_nom);
  if (s >= 0.0) {
    StepOutcome out;
    out.u = u_nom;
    out.slack = s;
    return out;
  }
  return inner(z);
}

}  // namespace probsafe
