// End-to-end acceptance run: one PASS/FAIL line per criterion, details on
// the indented lines below it. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "probsafe/config.hpp"
#include "probsafe/experiment.hpp"
#include "probsafe/oracles.hpp"

using namespace probsafe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Criterion {
  Criterion(int i, std::string t) : id(i), title(std::move(t)) {}

  int id;
  std::string title;
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    pass = pass && ok;
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec v1(double a) { return Vec::Constant(1, a); }
Mat m1(double a) { return Mat::Constant(1, 1, a); }

std::vector<ExperimentConfig> load_set(const std::string& setting) {
  std::vector<ExperimentConfig> out;
  for (const char* name : {"proposed", "cvar", "prsbc", "stocbf"})
    out.push_back(load_config(fs::path(PROBSAFE_CONFIG_DIR) / setting / (std::string(name) + ".toml")));
  return out;
}

const ControllerSeries& series(const ExperimentReport& r, const std::string& name) {
  for (const auto& s : r.series)
    if (s.controller == name) return s;
  throw std::runtime_error("no series " + name);
}

const OrderingStats& stats(const std::vector<OrderingStats>& v, const std::string& name) {
  for (const auto& s : v)
    if (s.controller == name) return s;
  throw std::runtime_error("no stats " + name);
}

// ------------------------------------------------------------------ 1
Criterion first_passage() {
  Criterion c{1, "first-passage oracle agreement (MC and CDE vs 2 Phi(1) - 1)"};
  const auto t0 = Clock::now();
  const double exact = oracle::reflection_survival(2.0, 2.0, 1.0);
  c.note(fmt("closed form %.6f", exact));
  const auto loop = linear_closed_loop(ControlAffineSystem::affine(m1(0.0), v1(0.0), m1(0.0), m1(2.0)),
                                       {m1(0.0), v1(0.0)}, BarrierSpec::affine(v1(1.0), -1.0), {}, {});
  EnsembleOptions eo;
  eo.dt = 1e-3;
  eo.n_samples = 100000;
  eo.seed = 1;
  const auto mc = mc_probability(loop, ProbabilityType::II, v1(3.0), 0.0, 1.0, eo);
  c.check(std::abs(mc.value - exact) <= 0.02, fmt("MC %.6f (stderr %.4f), |diff| %.4f <= 0.02", mc.value,
                                                  mc.std_error, std::abs(mc.value - exact)));
  GridSpec g;
  g.T = {0.0, 1.0, 101};
  g.x = {{0.99, 13.0, 1202}};
  const auto f = solve_cde(loop, ProbabilityType::II, g);
  const double v = field_value(f, AugmentedState{1.0, 0.0, 2.0, v1(3.0)});
  c.check(std::abs(v - exact) <= 0.02, fmt("CDE %.6f, |diff| %.4f <= 0.02", v, std::abs(v - exact)));
  const double secs = seconds_since(t0);
  c.check(secs < 120.0, fmt("runtime %.1f s < 120 s", secs));
  return c;
}

// ------------------------------------------------------------------ 2
Criterion identities() {
  Criterion c{2, "identity suite: I == II and III == IV on shared ensembles"};
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> ux(-2.0, 8.0), uL(-1.0, 1.5), uT(0.1, 10.0);
  const auto loop = linear_closed_loop(ControlAffineSystem::affine(m1(2.0), v1(0.0), m1(1.0), m1(2.0)),
                                       {m1(2.5), v1(0.0)}, BarrierSpec::affine(v1(1.0), -1.0), {}, {});
  int equal = 0;
  for (int r = 0; r < 20; ++r) {
    const double x = ux(gen), L = uL(gen), T = uT(gen);
    EnsembleOptions eo;
    eo.dt = 0.1;
    eo.n_samples = 2000;
    eo.seed = 100 + r;
    const auto st = ensemble_path_stats(loop, v1(x), L, T, eo);
    const auto a = estimate(ProbabilityType::I, st, eo.seed), b = estimate(ProbabilityType::II, st, eo.seed);
    const auto d = estimate(ProbabilityType::III, st, eo.seed), e = estimate(ProbabilityType::IV, st, eo.seed);
    const bool ok = a.value == b.value && d.value == e.value;
    equal += ok;
    if (!ok)
      c.check(false, fmt("x=%.3f L=%.3f T=%.3f differs", x, L, T));
  }
  c.check(equal == 20, fmt("%d / 20 configurations exactly equal", equal));
  return c;
}

// ------------------------------------------------------------------ 3, 5
Criterion worst_case(const ExperimentReport& r, double secs) {
  Criterion c{3, "worst-case setting: proposed within [0.85, 1], StoCBF dips, ordering"};
  const auto st = ordering_stats(r);
  for (const auto& s : st)
    c.note(fmt("%-8s time-avg E[F] %.5f (se %.5f), min %.5f", s.controller.c_str(),
               s.mean_expected_safe_prob, s.std_error, s.min_expected_safe_prob));
  for (const auto& s : r.series)
    if (s.out_of_domain_queries)
      c.note(s.controller + fmt(": %llu field queries clamped to the grid",
                                static_cast<unsigned long long>(s.out_of_domain_queries)));
  const auto& p = series(r, "proposed");
  std::size_t outside = 0, first_outside = p.t.size();
  for (std::size_t k = 0; k < p.t.size(); ++k)
    if (p.expected_safe_prob[k] < 0.85 || p.expected_safe_prob[k] > 1.0) {
      ++outside;
      first_outside = std::min(first_outside, k);
    }
  c.check(outside == 0, fmt("proposed E[F] outside [0.85, 1] at %.0f of %.0f steps", double(outside),
                            double(p.t.size())) +
                            (outside ? fmt(" (first at t = %.2f, value %.4f)", p.t[first_outside],
                                           p.expected_safe_prob[first_outside])
                                     : ""));
  const auto& sb = series(r, "stocbf");
  const double sb_min = *std::min_element(sb.expected_safe_prob.begin(), sb.expected_safe_prob.end());
  c.check(sb_min < 0.85, fmt("StoCBF min E[F] %.5f < 0.85", sb_min));

  const auto &P = stats(st, "proposed"), &C = stats(st, "cvar"), &R = stats(st, "prsbc"),
             &S = stats(st, "stocbf");
  auto above = [&](const OrderingStats& a, const OrderingStats& b, const char* what) {
    const double gap = a.mean_expected_safe_prob - b.mean_expected_safe_prob;
    const double se = std::hypot(a.std_error, b.std_error);
    c.check(gap > 0.0, std::string(what) + fmt(": gap %.5f (%.1f combined se)", gap, se > 0 ? gap / se : 0.0));
  };
  above(P, C, "proposed > cvar");
  above(C, R, "cvar > prsbc");
  above(R, S, "prsbc > stocbf");
  const double top_other =
      std::max({C.mean_expected_safe_prob, R.mean_expected_safe_prob, S.mean_expected_safe_prob});
  const double se = std::max({C.std_error, R.std_error, S.std_error});
  c.check(P.mean_expected_safe_prob - top_other > 3.0 * std::hypot(P.std_error, se),
          "proposed strictly highest with 3-se separation");
  c.check(secs < 600.0, fmt("runtime %.1f s < 600 s including the field", secs));
  return c;
}

Criterion non_decrease(const ExperimentReport& r) {
  Criterion c{5, "E[F] does not decrease while at or below 1 - eps (proposed, worst case)"};
  const auto& p = series(r, "proposed");
  const double eps = r.configs.front().controller.epsilon;
  const std::size_t n = p.safe_prob.size();
  std::size_t checked = 0, bad = 0;
  double worst = 1e300;
  for (std::size_t k = 0; k + 1 < p.t.size(); ++k) {
    if (p.expected_safe_prob[k] > 1.0 - eps) continue;
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p.safe_prob[i][k + 1] - p.safe_prob[i][k];
      sum += d;
      sum2 += d * d;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, (sum2 / n - mean * mean)) / std::max<double>(1, n - 1));
    ++checked;
    const double z = se > 0 ? mean / se : (mean >= 0 ? 0.0 : -1e300);
    worst = std::min(worst, z);
    if (mean < -3.0 * se) ++bad;
  }
  c.note(fmt("%.0f steps with mean F <= 1 - eps; smallest difference / se = %.2f", double(checked),
             checked ? worst : 0.0));
  c.check(bad == 0, fmt("%.0f steps decrease by more than 3 se", double(bad)));
  return c;
}

// ------------------------------------------------------------------ 4
Criterion switching(const ExperimentReport& r, const ExperimentReport& again) {
  Criterion c{4, "switching setting: proposed has the highest terminal empirical safe probability"};
  const auto st = ordering_stats(r);
  double best_other = -1;
  for (const auto& s : st) {
    c.note(s.controller + fmt(": terminal empirical %.3f, time-avg E[F] %.5f", s.terminal_empirical_safe_prob,
                              s.mean_expected_safe_prob));
    if (s.controller != "proposed") best_other = std::max(best_other, s.terminal_empirical_safe_prob);
  }
  const double p = stats(st, "proposed").terminal_empirical_safe_prob;
  c.check(p >= best_other, fmt("proposed %.3f >= best baseline %.3f", p, best_other));
  if (p == best_other) c.note("tie at the top: no baseline exceeds the proposed controller");
  c.check(timeseries_csv(r) == timeseries_csv(again), "re-run gives a byte-identical timeseries.csv");
  return c;
}

// ------------------------------------------------------------------ 6
Criterion contracts() {
  Criterion c{6, "controller contracts"};
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd(0.0, 3.0);
  bool compl_ok = true, active_ok = true;
  double worst_active = 0;
  for (int r = 0; r < 2000; ++r) {
    const AffineConstraint k{v1(nd(gen)), nd(gen)};
    const Vec un = v1(nd(gen));
    for (const auto& out : {constrained_opt_policy(k, un, Mat(), 1e-12),
                            additive_policy(k, un, 0.0, false, 1e-12)}) {
      const bool nominal_ok = k.slack(un) >= 0.0;
      compl_ok = compl_ok && ((out.u[0] == un[0]) == nominal_ok);
      if (!nominal_ok && !out.fell_back) {
        worst_active = std::max(worst_active, std::abs(k.slack(out.u)));
        active_ok = active_ok && std::abs(k.slack(out.u)) <= 1e-9;
      }
    }
    const auto eq = equality_policy(k, un, 1e-12);
    if (!eq.fell_back) {
      worst_active = std::max(worst_active, std::abs(k.slack(eq.u)));
      active_ok = active_ok && std::abs(k.slack(eq.u)) <= 1e-9;
    }
  }
  c.check(compl_ok, "nominal returned iff the condition already holds (2000 random cases)");
  c.check(active_ok, fmt("|slack| <= 1e-9 on modified steps (max %.2e)", worst_active));

  const BarrierSpec bar = BarrierSpec::affine(v1(1.0), -1.0);
  const auto quiet = ControlAffineSystem::affine(m1(2.0), v1(0.0), m1(1.0), m1(0.0));
  const auto noisy = ControlAffineSystem::affine(m1(2.0), v1(0.0), m1(1.0), m1(2.0));
  bool red0 = true, red5 = true;
  for (double x = -2.0; x <= 10.0; x += 0.25) {
    const Vec xv = v1(x), un = v1(-2.5 * x);
    red0 = red0 && prsbc_policy(quiet, bar, xv, 1.0, 0.1, 0.1, un).u[0] ==
                       stocbf_policy(quiet, bar, xv, 1.0, un).u[0];
    red5 = red5 && std::abs(prsbc_policy(noisy, bar, xv, 1.0, 0.5, 0.1, un).u[0] -
                            stocbf_policy(noisy, bar, xv, 1.0, un).u[0]) <= 1e-12;
  }
  c.check(red0, "PrSBC equals StoCBF with sigma = 0");
  c.check(red5, "PrSBC equals StoCBF at eps = 0.5");
  const double cv = gaussian_lower_cvar(0.0, 1.0, 0.1);
  c.check(std::abs(cv - (-1.755)) <= 1e-3, fmt("Gaussian CVaR_0.1 = %.6f (target -1.755 +- 1e-3)", cv));
  return c;
}

// ------------------------------------------------------------------ 7
Criterion field_quality() {
  Criterion c{7, "field quality: range, CDE vs MC probes, smoothing"};
  const ExperimentConfig cfg = load_config(fs::path(PROBSAFE_CONFIG_DIR) / "worst_case" / "proposed.toml");
  CdeReport rep;
  const auto loop = nominal_loop(cfg);
  const auto f = solve_cde(loop, cfg.field.ptype, cfg.field.grid, PolicyTag::NominalClosedLoop,
                           build_cde_options(cfg), &rep);
  const auto [mn, mx] = std::minmax_element(f.values.begin(), f.values.end());
  c.check(*mn >= 0.0 && *mx <= 1.0, fmt("values in [%.3g, %.3g]", *mn, *mx));
  c.note(fmt("scheme %s, dT %.4g, largest clip %.2e",
             rep.scheme_used == TimeScheme::Explicit ? "explicit" : "implicit", rep.dT, rep.max_clip));

  // Probes: log-uniform x over the region the rollouts visit, T over the horizon.
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ulogx(0.0, std::log(800.0)), uT(0.5, cfg.horizon.H);
  int good = 0;
  for (int p = 0; p < 20; ++p) {
    const double x = std::exp(ulogx(gen)), T = uT(gen);
    EnsembleOptions eo;
    eo.dt = 1e-3;  // fine enough that discrete exit monitoring is not the error source
    eo.n_samples = 4000;
    eo.seed = 700 + p;
    const auto mc = mc_probability(loop, cfg.field.ptype, v1(x), 0.0, T, eo);
    const double v = field_value(f, AugmentedState{T, 0.0, x - 1.0, v1(x)});
    const double tol = 3.0 * mc.std_error + 0.02;
    const bool ok = std::abs(v - mc.value) <= tol;
    good += ok;
    c.details.push_back(std::string(ok ? "ok   " : "FAIL ") +
                        fmt("probe x=%8.3f T=%5.2f  CDE %.4f  MC %.4f  tol %.4f", x, T, v, mc.value, tol));
  }
  c.check(good == 20, fmt("%d / 20 probes within 3 se + 0.02", good));

  // Smoothing of a noised copy of the solved field.
  std::normal_distribution<double> noise(0.0, 0.05);
  auto raw = f;
  raw.provenance = Provenance::MC;
  for (double& v : raw.values) v += noise(gen);
  SmoothingOptions so = cfg.field.smoothing;
  so.cde = build_cde_options(cfg);
  const auto sm = smooth_mc_field(raw, loop, so);
  double e_raw = 0, e_clip = 0, e_sm = 0;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    e_raw += std::pow(raw.values[i] - f.values[i], 2);
    e_clip += std::pow(std::clamp(raw.values[i], 0.0, 1.0) - f.values[i], 2);
    e_sm += std::pow(sm.values[i] - f.values[i], 2);
  }
  const double n = static_cast<double>(f.values.size());
  e_raw = std::sqrt(e_raw / n);
  e_clip = std::sqrt(e_clip / n);
  e_sm = std::sqrt(e_sm / n);
  c.note(fmt("RMS error: raw %.5f, raw clipped to [0, 1] %.5f, smoothed %.5f", e_raw, e_clip, e_sm));
  c.check(e_sm <= 0.6 * e_clip, fmt("smoothing removes %.1f%% of the clipped raw RMS error (>= 40%%)",
                                    100.0 * (1.0 - e_sm / e_clip)));
  return c;
}

// ------------------------------------------------------------------ 8
Criterion reproducibility(const std::vector<ExperimentConfig>& wc, const std::vector<ExperimentConfig>& sw,
                          const ExperimentReport& wc_ref, const ExperimentReport& sw_ref) {
  Criterion c{8, "byte-identical timeseries.csv across re-runs and thread counts"};
  const auto dir = fs::temp_directory_path() / "probsafe_acceptance";
  for (unsigned threads : {1u, 3u, 8u}) {
    FieldCache cache;
    for (const auto* set : {&wc, &sw}) {
      auto cs = *set;
      for (auto& x : cs) x.threads = threads;
      const auto& ref = set == &wc ? wc_ref : sw_ref;
      const auto r = compare_controllers(cs, &cache);
      emit_outputs(r, dir / "a");
      emit_outputs(ref, dir / "b");
      std::ifstream a(dir / "a" / "timeseries.csv", std::ios::binary), b(dir / "b" / "timeseries.csv", std::ios::binary);
      std::stringstream sa, sb;
      sa << a.rdbuf();
      sb << b.rdbuf();
      c.check(sa.str() == sb.str() && !sa.str().empty(),
              std::string(set == &wc ? "worst-case" : "switching") + fmt(" set, %u threads", threads));
      for (const auto& x : cs) {
        ExperimentReport single = run_experiment(x, &cache);
        ExperimentReport again = run_experiment(x, &cache);
        c.check(timeseries_csv(single) == timeseries_csv(again),
                x.name + fmt(" single run repeated, %u threads", threads));
      }
    }
  }
  return c;
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  auto report = [&](Criterion c) {
    std::printf("%s  criterion %d: %s\n", c.pass ? "PASS" : "FAIL", c.id, c.title.c_str());
    for (const auto& d : c.details) std::printf("        %s\n", d.c_str());
    std::fflush(stdout);
    results.push_back(std::move(c));
  };
  try {
    report(first_passage());
    report(identities());

    const auto wc = load_set("worst_case");
    const auto sw = load_set("switching");
    auto t0 = Clock::now();
    const auto wc_report = compare_controllers(wc);  // fresh cache: the field is computed here
    const double wc_secs = seconds_since(t0);
    report(worst_case(wc_report, wc_secs));

    FieldCache cache;
    const auto sw_report = compare_controllers(sw, &cache);
    const auto sw_again = compare_controllers(sw, &cache);
    report(switching(sw_report, sw_again));
    report(non_decrease(wc_report));
    report(contracts());
    report(field_quality());
    report(reproducibility(wc, sw, wc_report, sw_report));
  } catch (const std::exception& e) {
    std::printf("FAIL  acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  int failed = 0;
  std::printf("\nsummary:\n");
  for (const auto& c : results) {
    std::printf("%s  criterion %d\n", c.pass ? "PASS" : "FAIL", c.id);
    failed += !c.pass;
  }
  return failed == 0 ? 0 : 1;
}
