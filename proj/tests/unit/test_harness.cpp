#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "probsafe/experiment.hpp"
#include "probsafe/safety_prob.hpp"

using namespace probsafe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("probsafe_harness_" + name);
  fs::remove_all(d);
  return d;
}

// A small field grid keeps these tests quick; the acceptance run uses the
// full default grid.
ExperimentConfig small(const std::string& kind, const std::string& extra = "") {
  return parse_config("[controller]\nkind = \"" + kind + "\"\n" + extra +
                      "\n[simulation]\nn_trajectories = 12\nt_end = 3.0\n"
                      "[field.grid]\nx_min = -1.0\nx_max = 199.0\nx_nodes = 401\nT_nodes = 51\n");
}

FieldCache& shared_cache() {
  static FieldCache c;
  return c;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("empty report gives a header-only CSV") {
  const ExperimentReport r;
  CHECK(timeseries_csv(r) ==
        "t,controller,mean_state,std_state,expected_safe_prob,empirical_safe_prob,fallback_count\n");
}

TEST_CASE("noise-free single nominal trajectory follows the ODE") {
  auto c = parse_config(
      "[system]\nsigma = [[0.0]]\n[controller]\nkind = \"nominal\"\n"
      "[simulation]\nn_trajectories = 1\ndt = 0.001\nt_end = 2.0\n"
      "[field.grid]\nx_min = -1.0\nx_max = 19.0\nx_nodes = 81\nT_nodes = 11\n");
  const auto r = run_experiment(c);
  const auto& s = r.series.front();
  CHECK(std::abs(s.mean_state.back() - 3.0 * std::exp(-1.0)) < 1e-3);
  CHECK(s.std_state.back() == 0.0);
}

TEST_CASE("outputs: row count, determinism, idempotence") {
  const auto c = small("worst_case");
  const auto r1 = run_experiment(c, &shared_cache());
  const auto r2 = run_experiment(c, &shared_cache());
  const auto d1 = scratch("a"), d2 = scratch("b");
  emit_outputs(r1, d1);
  emit_outputs(r2, d2);
  const std::string csv = slurp(d1 / "timeseries.csv");
  CHECK(csv == slurp(d2 / "timeseries.csv"));
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  // Header plus one row per stored time (t = 0 included) per controller.
  CHECK(lines == 1 + r1.series.front().t.size());
  CHECK(r1.series.front().t.size() == step_count(c.t_end, c.dt) + 1);

  emit_outputs(r1, d1);
  CHECK(csv == slurp(d1 / "timeseries.csv"));
  for (const char* f : {"summary.csv", "metadata.txt", "config.resolved.toml", "mean_state.svg",
                        "expected_safe_prob.svg", "empirical_safe_prob.svg"})
    CHECK(fs::exists(d1 / f));
  CHECK(slurp(d1 / "mean_state.svg").rfind("<svg", 0) == 0);

  // The resolved config parses back to the same config.
  CHECK(parse_config(slurp(d1 / "config.resolved.toml")) == c);
}

TEST_CASE("unwritable output directory reports the path") {
  const auto blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  try {
    emit_outputs(ExperimentReport{}, blocker / "sub");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(blocker.string()) != std::string::npos);
  }
}

TEST_CASE("reports do not depend on the thread count") {
  auto c = small("switching");
  c.threads = 1;
  const auto a = timeseries_csv(run_experiment(c, &shared_cache()));
  c.threads = 4;
  const auto b = timeseries_csv(run_experiment(c, &shared_cache()));
  CHECK(a == b);
}

TEST_CASE("metric consistency and ranges") {
  const auto c = small("stocbf", "enforcement = \"equality\"");
  const auto r = run_experiment(c, &shared_cache());
  const auto& s = r.series.front();
  const auto barrier = build_barrier(c);
  const auto sys = build_system(c);
  const Policy pol = build_policy(c, nullptr);
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    CHECK(s.expected_safe_prob[k] >= 0.0);
    CHECK(s.expected_safe_prob[k] <= 1.0);
    if (k > 0) CHECK(s.empirical_safe_prob[k] <= s.empirical_safe_prob[k - 1]);
  }
  // Empirical safe probability equals the mean of 1{exit time > t} over the
  // same trajectories, recomputed here with the path statistics.
  std::vector<double> exit(c.n_trajectories);
  for (std::uint32_t i = 0; i < c.n_trajectories; ++i) {
    const auto tr = simulate(sys, pol.law(), barrier, c.horizon, build_margin(c), c.x0, c.dt,
                             c.t_end, c.seed, i);
    exit[i] = first_exit_time(tr, barrier, c.ell0);
  }
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    double alive = 0;
    for (double e : exit) alive += e > s.t[k] ? 1.0 : 0.0;
    CHECK(s.empirical_safe_prob[k] == alive / c.n_trajectories);
  }
}

TEST_CASE("comparing a controller with itself gives identical curves") {
  const auto c = small("cvar", "enforcement = \"equality\"");
  const auto r = compare_controllers({c, c}, &shared_cache());
  REQUIRE(r.series.size() == 2);
  CHECK(r.series[0].expected_safe_prob == r.series[1].expected_safe_prob);
  CHECK(r.series[0].mean_state == r.series[1].mean_state);
  CHECK(r.series[0].controller == "cvar");
  CHECK(r.series[1].controller == "cvar#2");

  auto other = c;
  other.dt = 0.05;
  CHECK_THROWS_AS(compare_controllers({c, other}), ConfigError);
  other = c;
  other.t_end = 2.0;
  CHECK_THROWS_AS(compare_controllers({c, other}), ConfigError);
  other = c;
  other.seed = 2;
  CHECK_THROWS_AS(compare_controllers({c, other}), ConfigError);
}

TEST_CASE("missing field file: compute or fail with instructions") {
  auto c = small("worst_case");
  c.field.file = (scratch("nofield") / "absent.field").string();
  c.field.compute_if_missing = false;
  try {
    nominal_field(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("probsafe field") != std::string::npos);
  }
  c.field.compute_if_missing = true;
  const auto f = nominal_field(c);
  CHECK(f->values.size() == c.field.grid.size());

  // A stored field is loaded instead of recomputed.
  const auto dir = scratch("withfield");
  fs::create_directories(dir);
  write_field(*f, dir / "f.bin");
  c.field.file = (dir / "f.bin").string();
  c.field.compute_if_missing = false;
  CHECK(nominal_field(c)->values == f->values);
  auto wrong = c;
  wrong.field.grid.x[0].nodes = 11;
  CHECK_THROWS_AS(nominal_field(wrong), ConfigError);
}

TEST_CASE("overall closed-loop evaluation and monte carlo fields run") {
  auto c = small("worst_case", "");
  c.field.evaluation = PolicyTag::OverallClosedLoop;
  c.field.picard_iterations = 1;
  const auto r = run_experiment(c);
  CHECK(r.evaluation == "overall");
  for (double v : r.series.front().expected_safe_prob) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  auto m = parse_config(
      "[controller]\nkind = \"switching\"\n[simulation]\nn_trajectories = 4\nt_end = 1.0\n"
      "[horizon]\nH = 1.0\n[field]\nsource = \"mc_smoothed\"\nmc_samples = 200\n"
      "[field.grid]\nx_min = -1.0\nx_max = 19.0\nx_nodes = 41\nT_nodes = 11\n");
  const auto rm = run_experiment(m);
  CHECK(rm.field_provenance == "mc_smoothed");
}

}  // TEST_SUITE
