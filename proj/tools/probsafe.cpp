#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "probsafe/config.hpp"
#include "probsafe/experiment.hpp"
#include "probsafe/oracles.hpp"

namespace fs = std::filesystem;
using namespace probsafe;

namespace {

enum Exit { kOk = 0, kConfigError = 2, kInfeasible = 3, kNumerical = 4 };

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

int field_cmd(const fs::path& config_path, const fs::path& out) {
  const auto cfg = load_config(config_path);
  prepare_dir(out);
  const auto field = nominal_field(cfg);
  write_field(*field, out / "field.bin");
  write_field_csv(*field, out / "field.csv");
  std::ofstream(out / "config.resolved.toml") << serialize_config(cfg);
  std::printf("field: %zu nodes, provenance %s, written to %s\n", field->values.size(),
              std::string(to_string(field->provenance)).c_str(), out.string().c_str());
  return kOk;
}

int report_cmd(const ExperimentReport& report, const fs::path& out) {
  emit_outputs(report, out);
  int code = kOk;
  for (std::size_t i = 0; i < report.series.size(); ++i) {
    const auto& s = report.series[i];
    const double limit = report.configs[i].max_fallback_rate;
    std::printf("%-12s fallback rate %.4f (limit %.4f)\n", s.controller.c_str(), s.fallback_rate(),
                limit);
    if (s.fallback_rate() > limit) code = kInfeasible;
  }
  if (code == kInfeasible) std::fprintf(stderr, "infeasibility-rate threshold exceeded\n");
  return code;
}

int oracles_cmd(bool fast) {
  bool ok = true;
  for (const auto& r : run_oracle_suite(fast)) {
    std::printf("%s  %-52s expected %.6g observed %.6g tol %.3g\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.expected, r.observed, r.tolerance);
    ok = ok && r.pass;
  }
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic safety certificates for stochastic control-affine systems"};
  app.require_subcommand(1);

  fs::path config, out;
  std::vector<fs::path> configs;
  bool fast = false;

  auto* field = app.add_subcommand("field", "Compute the nominal closed-loop safe-probability field");
  field->add_option("--config", config, "TOML config")->required()->check(CLI::ExistingFile);
  field->add_option("--out", out, "Output directory")->required();

  auto* sim = app.add_subcommand("simulate", "Run one controller's ensemble");
  sim->add_option("--config", config, "TOML config")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "Output directory")->required();

  auto* cmp = app.add_subcommand("compare", "Run several controllers on a shared system and seed");
  cmp->add_option("--configs", configs, "TOML configs")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out, "Output directory")->required();

  auto* orc = app.add_subcommand("validate-oracles", "Check the library against closed forms");
  orc->add_flag("--fast", fast, "Fewer Monte Carlo samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*field) return field_cmd(config, out);
    if (*sim) return report_cmd(run_experiment(load_config(config)), out);
    if (*cmp) {
      std::vector<ExperimentConfig> cs;
      for (const auto& p : configs) cs.push_back(load_config(p));
      FieldCache cache;
      return report_cmd(compare_controllers(cs, &cache), out);
    }
    if (*orc) return oracles_cmd(fast);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const SchemeFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const CflViolation& e) {
    std::fprintf(stderr, "numerical failure: %s (need dT <= %g)\n", e.what(), e.required_dT());
    return kNumerical;
  } catch (const IntegrationBlowup& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kOk;
}
