#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "probsafe/cde_field.hpp"
#include "probsafe/config.hpp"
#include "probsafe/controllers.hpp"

namespace probsafe {

/// Per-time-step ensemble metrics of one controller.
struct ControllerSeries {
  std::string controller;
  std::vector<double> t;
  std::vector<double> mean_state;  // first state component
  std::vector<double> std_state;
  std::vector<double> expected_safe_prob;   // mean over trajectories of F(Z_t)
  std::vector<double> empirical_safe_prob;  // fraction with no exit up to t
  std::vector<std::uint32_t> fallback_count;
  /// F(Z_t) per trajectory: safe_prob[i][k] for trajectory i at step k.
  std::vector<std::vector<double>> safe_prob;
  /// First step with phi < L per trajectory, -1 if none.
  std::vector<std::int32_t> exit_step;
  std::uint64_t total_fallbacks = 0;
  std::uint64_t total_steps = 0;
  std::uint64_t out_of_domain_queries = 0;

  double fallback_rate() const {
    return total_steps ? static_cast<double>(total_fallbacks) / static_cast<double>(total_steps)
                       : 0.0;
  }
};

struct ExperimentReport {
  std::vector<ControllerSeries> series;
  std::vector<ExperimentConfig> configs;
  std::vector<std::uint64_t> config_hashes;
  std::uint64_t seed = 0;
  std::string field_provenance;
  std::string evaluation;
  /// Notes on the baseline surrogates and field choice for the metadata file.
  std::vector<std::string> notes;
};

/// Ordering statistics across controllers: time average of the ensemble mean
/// of F with the standard error of the per-trajectory time averages, and the
/// terminal empirical safe probability.
struct OrderingStats {
  std::string controller;
  double mean_expected_safe_prob = 0.0;
  double std_error = 0.0;
  double terminal_empirical_safe_prob = 0.0;
  double min_expected_safe_prob = 0.0;
};

std::vector<OrderingStats> ordering_stats(const ExperimentReport& report);

/// Thrown when a rollout diverges or a field solve fails.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reuses fields across experiments that share the field-relevant settings.
class FieldCache {
 public:
  std::shared_ptr<const SafeProbabilityField> find(const std::string& key) const;
  void store(const std::string& key, std::shared_ptr<const SafeProbabilityField> f);

 private:
  std::map<std::string, std::shared_ptr<const SafeProbabilityField>> fields_;
};

/// Builders shared by the CLI, the experiment runner and the tests.
ControlAffineSystem build_system(const ExperimentConfig& c);
BarrierSpec build_barrier(const ExperimentConfig& c);
MarginSpec build_margin(const ExperimentConfig& c);
PolicyParams build_policy_params(const ExperimentConfig& c);
ClosedLoop nominal_loop(const ExperimentConfig& c);
CdeOptions build_cde_options(const ExperimentConfig& c);

/// Field of the nominal closed loop per `c.field` (loaded from `c.field.file`
/// when it exists).
std::shared_ptr<const SafeProbabilityField> nominal_field(const ExperimentConfig& c,
                                                          FieldCache* cache = nullptr);
/// Computes the nominal field from scratch (ignores `c.field.file`).
SafeProbabilityField compute_nominal_field(const ExperimentConfig& c);

/// The controller of `c` built on `field`.
Policy build_policy(const ExperimentConfig& c, std::shared_ptr<const SafeProbabilityField> field);

ExperimentReport run_experiment(const ExperimentConfig& c, FieldCache* cache = nullptr);

/// Runs every config on the shared system and seed; throws ConfigError on
/// mismatched dt, t_end, seed, system or trajectory count.
ExperimentReport compare_controllers(const std::vector<ExperimentConfig>& configs,
                                     FieldCache* cache = nullptr);

/// Writes timeseries.csv, summary.csv, metadata.txt, config.resolved*.toml
/// and SVG plots into `dir` (created if needed).
void emit_outputs(const ExperimentReport& report, const std::filesystem::path& dir);
std::string timeseries_csv(const ExperimentReport& report);

}  // namespace probsafe
