#include "probsafe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "probsafe/parallel.hpp"

namespace probsafe {

std::shared_ptr<const SafeProbabilityField> FieldCache::find(const std::string& key) const {
  const auto it = fields_.find(key);
  return it == fields_.end() ? nullptr : it->second;
}

void FieldCache::store(const std::string& key, std::shared_ptr<const SafeProbabilityField> f) {
  fields_[key] = std::move(f);
}

ControlAffineSystem build_system(const ExperimentConfig& c) {
  return ControlAffineSystem::affine(c.system.A, c.system.a0, c.system.B, c.system.S);
}

BarrierSpec build_barrier(const ExperimentConfig& c) {
  return BarrierSpec::affine(c.barrier_c, c.barrier_d);
}

MarginSpec build_margin(const ExperimentConfig& c) {
  MarginSpec m{c.ell0, {}};
  if (c.margin_slope != 0.0 || c.margin_offset != 0.0)
    m.f_ell = [a = c.margin_slope, b = c.margin_offset](double L) { return a * L + b; };
  return m;
}

PolicyParams build_policy_params(const ExperimentConfig& c) {
  PolicyParams p;
  p.cert.epsilon = c.controller.epsilon;
  p.cert.alpha_gain = c.controller.alpha;
  p.eta = c.controller.eta;
  p.gamma = c.controller.gamma;
  p.beta = c.controller.beta;
  p.dt = c.dt;
  p.J_weight = c.controller.J_weight;
  p.min_gain_norm = c.controller.min_gain_norm;
  p.baseline_enforcement = c.controller.enforcement;
  p.switching_inner = c.controller.switching_inner;
  return p;
}

ClosedLoop nominal_loop(const ExperimentConfig& c) {
  return linear_closed_loop(build_system(c), LinearFeedback{c.K, c.k0}, build_barrier(c),
                            c.horizon, build_margin(c));
}

CdeOptions build_cde_options(const ExperimentConfig& c) {
  CdeOptions o;
  o.scheme = c.field.scheme;
  o.dT = c.field.dT;
  o.implicit_substeps = c.field.implicit_substeps;
  return o;
}

namespace {

// Settings that determine the nominal field.
std::string nominal_field_key(const ExperimentConfig& c) {
  ExperimentConfig k = default_config();
  k.system = c.system;
  k.barrier_c = c.barrier_c;
  k.barrier_d = c.barrier_d;
  k.K = c.K;
  k.k0 = c.k0;
  k.horizon = c.horizon;
  k.ell0 = c.ell0;
  k.margin_slope = c.margin_slope;
  k.margin_offset = c.margin_offset;
  k.field = c.field;
  k.field.evaluation = PolicyTag::NominalClosedLoop;
  k.field.picard_iterations = 0;
  k.x0 = Vec::Zero(c.system.A.rows());
  k.seed = c.field.source == Provenance::CDE ? 0 : c.seed;
  return serialize_config(k);
}

bool uses_field(PolicyKind k, PolicyKind inner) {
  auto f = [](PolicyKind p) {
    return p == PolicyKind::Additive || p == PolicyKind::ConstrainedOpt ||
           p == PolicyKind::WorstCaseEquality;
  };
  return f(k) || (k == PolicyKind::Switching && f(inner));
}

SafeProbabilityField field_for_loop(const ExperimentConfig& c, const ClosedLoop& loop,
                                    PolicyTag tag) {
  const CdeOptions cde = build_cde_options(c);
  try {
    if (c.field.source == Provenance::CDE) return solve_cde(loop, c.field.ptype, c.field.grid, tag, cde);
    EnsembleOptions eo;
    eo.dt = c.field.mc_dt;
    eo.n_samples = static_cast<std::uint32_t>(c.field.mc_samples);
    eo.seed = c.seed;
    eo.threads = c.threads;
    SafeProbabilityField raw = mc_field(loop, c.field.ptype, c.field.grid, eo, tag);
    if (c.field.source == Provenance::MC) return raw;
    SmoothingOptions so = c.field.smoothing;
    so.cde = cde;
    return smooth_mc_field(raw, loop, so);
  } catch (const SchemeFailure& e) {
    throw NumericalFailure(std::string("field computation failed: ") + e.what());
  } catch (const IntegrationBlowup& e) {
    throw NumericalFailure(std::string("field computation failed: ") + e.what());
  }
}

}  // namespace

SafeProbabilityField compute_nominal_field(const ExperimentConfig& c) {
  return field_for_loop(c, nominal_loop(c), PolicyTag::NominalClosedLoop);
}

std::shared_ptr<const SafeProbabilityField> nominal_field(const ExperimentConfig& c,
                                                          FieldCache* cache) {
  const std::string key = nominal_field_key(c);
  if (cache)
    if (auto f = cache->find(key)) return f;
  std::shared_ptr<const SafeProbabilityField> f;
  if (!c.field.file.empty() && std::filesystem::exists(c.field.file)) {
    auto loaded = std::make_shared<SafeProbabilityField>(read_field(c.field.file));
    if (!(loaded->grid == c.field.grid) || loaded->ptype != c.field.ptype)
      throw ConfigError("field file " + c.field.file + " does not match field.grid / field.ptype");
    f = std::move(loaded);
  } else if (!c.field.file.empty() && !c.field.compute_if_missing) {
    throw ConfigError("field file " + c.field.file +
                      " is missing; create it with `probsafe field --config <this config> --out "
                      "<dir>` or set field.on_missing = \"compute\"");
  } else {
    f = std::make_shared<SafeProbabilityField>(compute_nominal_field(c));
  }
  if (cache) cache->store(key, f);
  return f;
}

Policy build_policy(const ExperimentConfig& c, std::shared_ptr<const SafeProbabilityField> field) {
  AugmentedDynamics dyn(build_system(c), build_barrier(c), c.horizon, build_margin(c));
  Policy::NominalFn nominal = [K = c.K, k0 = c.k0](const Vec& x) -> Vec { return -K * x + k0; };
  return Policy(c.controller.kind, build_policy_params(c), std::move(dyn), std::move(nominal),
                uses_field(c.controller.kind, c.controller.switching_inner) ? std::move(field)
                                                                            : nullptr);
}

namespace {

ClosedLoop policy_loop(const ExperimentConfig& c, const Policy& policy) {
  return ClosedLoop{build_system(c), policy.law(), build_barrier(c), c.horizon, build_margin(c),
                    std::nullopt};
}

ControllerSeries run_single(const ExperimentConfig& c, FieldCache* cache) {
  auto field = nominal_field(c, cache);
  std::shared_ptr<const SafeProbabilityField> eval = field;
  std::shared_ptr<const SafeProbabilityField> control = field;
  if (c.field.evaluation == PolicyTag::OverallClosedLoop && c.controller.kind != PolicyKind::Nominal) {
    if (uses_field(c.controller.kind, c.controller.switching_inner)) {
      // Fixed-point iteration: the policy is built on the previous field.
      for (std::size_t it = 0; it < std::max<std::size_t>(1, c.field.picard_iterations); ++it) {
        const Policy p = build_policy(c, control);
        control = std::make_shared<SafeProbabilityField>(
            field_for_loop(c, policy_loop(c, p), PolicyTag::OverallClosedLoop));
      }
    } else {
      const Policy p = build_policy(c, nullptr);
      control = std::make_shared<SafeProbabilityField>(
          field_for_loop(c, policy_loop(c, p), PolicyTag::OverallClosedLoop));
    }
    eval = control;
    if (!uses_field(c.controller.kind, c.controller.switching_inner)) control = field;
  }

  const Policy policy = build_policy(c, control);
  const ControlLaw law = policy.law();
  const auto sys = build_system(c);
  const auto barrier = build_barrier(c);
  const auto margin = build_margin(c);
  std::vector<Trajectory> trajs(c.n_trajectories);
  try {
    parallel_for(
        trajs.size(), c.threads,
        [&](std::size_t b, std::size_t e) {
          for (std::size_t i = b; i < e; ++i)
            trajs[i] = simulate(sys, law, barrier, c.horizon, margin, c.x0, c.dt, c.t_end, c.seed, i);
        },
        1);
  } catch (const IntegrationBlowup& e) {
    throw NumericalFailure(controller_label(c.controller) + ": " + e.what());
  }

  ControllerSeries s;
  s.controller = controller_label(c.controller);
  const std::size_t K = trajs.front().times.size();
  const std::size_t n = trajs.size();
  s.t = trajs.front().times;
  s.mean_state.assign(K, 0.0);
  s.std_state.assign(K, 0.0);
  s.expected_safe_prob.assign(K, 0.0);
  s.empirical_safe_prob.assign(K, 0.0);
  s.fallback_count.assign(K, 0);
  s.safe_prob.assign(n, std::vector<double>(K, 0.0));
  s.exit_step.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& tr = trajs[i];
    for (std::size_t k = 0; k < K; ++k) {
      const Vec& x = tr.states[k];
      const double phi = barrier.phi(x);
      bool ood = false;
      s.safe_prob[i][k] =
          field_value(*eval, AugmentedState{tr.horizons[k], tr.margins[k], phi, x}, &ood);
      s.out_of_domain_queries += ood ? 1 : 0;
      if (s.exit_step[i] < 0 && phi - tr.margins[k] < 0.0) s.exit_step[i] = static_cast<std::int32_t>(k);
      if (k < tr.outcomes.size() && tr.outcomes[k].fell_back) {
        ++s.fallback_count[k];
        ++s.total_fallbacks;
      }
    }
    s.total_steps += tr.steps();
  }
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0, sumF = 0.0;
    std::size_t alive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += trajs[i].states[k][0];
      sumF += s.safe_prob[i][k];
      const std::int32_t e = s.exit_step[i];
      alive += (e < 0 || e > static_cast<std::int32_t>(k)) ? 1 : 0;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = trajs[i].states[k][0] - mean;
      ss += d * d;
    }
    s.mean_state[k] = mean;
    s.std_state[k] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    s.expected_safe_prob[k] = sumF / static_cast<double>(n);
    s.empirical_safe_prob[k] = static_cast<double>(alive) / static_cast<double>(n);
  }
  return s;
}

std::vector<std::string> standard_notes(const ExperimentConfig& c) {
  std::vector<std::string> notes;
  notes.push_back("prsbc: one-step Gaussian surrogate, right side -eta phi + q_{1-eps} |L_sigma phi| / sqrt(dt)");
  notes.push_back("cvar: one-step Gaussian surrogate of the next sampled barrier value, sampling interval dt");
  notes.push_back(std::string("expected_safe_prob: field of the ") +
                  (c.field.evaluation == PolicyTag::NominalClosedLoop ? "nominal" : "overall") +
                  " closed loop queried along the simulated trajectories");
  return notes;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& c, FieldCache* cache) {
  validate_config(c);
  ExperimentReport r;
  r.series.push_back(run_single(c, cache));
  r.configs.push_back(c);
  r.config_hashes.push_back(config_hash(c));
  r.seed = c.seed;
  r.field_provenance = std::string(to_string(c.field.source));
  r.evaluation = std::string(to_string(c.field.evaluation));
  r.notes = standard_notes(c);
  return r;
}

ExperimentReport compare_controllers(const std::vector<ExperimentConfig>& configs,
                                     FieldCache* cache) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  const ExperimentConfig& ref = configs.front();
  for (const auto& c : configs) {
    validate_config(c);
    if (c.dt != ref.dt) throw ConfigError("compare: dt differs between configs");
    if (c.t_end != ref.t_end) throw ConfigError("compare: t_end differs between configs");
    if (c.seed != ref.seed) throw ConfigError("compare: seed differs between configs");
    if (!(c.system == ref.system) || c.barrier_c != ref.barrier_c || c.barrier_d != ref.barrier_d)
      throw ConfigError("compare: system or barrier differs between configs");
    if (c.x0 != ref.x0 || c.n_trajectories != ref.n_trajectories)
      throw ConfigError("compare: x0 or n_trajectories differs between configs");
    if (c.field.source != ref.field.source || c.field.evaluation != ref.field.evaluation)
      throw ConfigError("compare: field source or evaluation differs between configs");
  }
  FieldCache local;
  if (!cache) cache = &local;
  ExperimentReport r;
  r.seed = ref.seed;
  r.field_provenance = std::string(to_string(ref.field.source));
  r.evaluation = std::string(to_string(ref.field.evaluation));
  r.notes = standard_notes(ref);
  for (const auto& c : configs) {
    ControllerSeries s = run_single(c, cache);
    int dup = 1;
    for (const auto& prev : r.series)
      if (prev.controller == s.controller || prev.controller.rfind(s.controller + "#", 0) == 0) ++dup;
    if (dup > 1) s.controller += "#" + std::to_string(dup);
    r.series.push_back(std::move(s));
    r.configs.push_back(c);
    r.config_hashes.push_back(config_hash(c));
  }
  return r;
}

std::vector<OrderingStats> ordering_stats(const ExperimentReport& report) {
  std::vector<OrderingStats> out;
  for (const auto& s : report.series) {
    OrderingStats o;
    o.controller = s.controller;
    const std::size_t n = s.safe_prob.size();
    std::vector<double> avg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      avg[i] = std::accumulate(s.safe_prob[i].begin(), s.safe_prob[i].end(), 0.0) /
               static_cast<double>(s.safe_prob[i].size());
    const double mean = std::accumulate(avg.begin(), avg.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double a : avg) ss += (a - mean) * (a - mean);
    o.mean_expected_safe_prob = mean;
    o.std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    o.terminal_empirical_safe_prob = s.empirical_safe_prob.back();
    o.min_expected_safe_prob =
        *std::min_element(s.expected_safe_prob.begin(), s.expected_safe_prob.end());
    out.push_back(o);
  }
  return out;
}

}  // namespace probsafe
