#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "probsafe/cde_field.hpp"
#include "probsafe/controllers.hpp"

namespace probsafe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// f(x) = A x + a0, g(x) = B, sigma(x) = S.
struct SystemConfig {
  Mat A;
  Vec a0;
  Mat B;
  Mat S;
  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

struct ControllerConfig {
  PolicyKind kind = PolicyKind::WorstCaseEquality;
  Enforcement enforcement = Enforcement::Projection;
  PolicyKind switching_inner = PolicyKind::ConstrainedOpt;
  std::string label;  // empty: derived from kind
  double alpha = 1.0;
  double epsilon = 0.1;
  double eta = 1.0;
  double gamma = 0.65;
  double beta = 0.1;
  double min_gain_norm = 1e-12;
  Mat J_weight;  // empty: identity
  friend bool operator==(const ControllerConfig&, const ControllerConfig&) = default;
};

struct FieldConfig {
  Provenance source = Provenance::CDE;
  PolicyTag evaluation = PolicyTag::NominalClosedLoop;
  ProbabilityType ptype = ProbabilityType::I;
  GridSpec grid;
  TimeScheme scheme = TimeScheme::Auto;
  double dT = 0.0;
  std::size_t implicit_substeps = 10;
  double mc_dt = 0.1;
  std::size_t mc_samples = 2000;
  std::size_t picard_iterations = 2;
  SmoothingOptions smoothing;
  std::string file;  // optional precomputed field
  bool compute_if_missing = true;
  friend bool operator==(const FieldConfig& a, const FieldConfig& b);
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  SystemConfig system;
  Vec barrier_c;
  double barrier_d = 0.0;
  Mat K;   // nominal u = -K x + k0
  Vec k0;
  HorizonSpec horizon;
  double ell0 = 0.0;
  double margin_slope = 0.0;  // f_ell(L) = slope L + offset
  double margin_offset = 0.0;
  ControllerConfig controller;
  Vec x0;
  double dt = 0.1;
  double t_end = 10.0;
  std::uint32_t n_trajectories = 50;
  std::uint32_t mc_samples = 10000;
  unsigned threads = 0;
  double max_fallback_rate = 0.25;
  FieldConfig field;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

/// The one-dimensional example: f = 2x, g = 1, sigma = 2, phi = x - 1,
/// nominal u = -2.5 x, with the default controller parameters.
ExperimentConfig default_config();

/// Parses TOML text on top of default_config(). Relative `field.file` paths
/// are resolved against `base_dir`. Throws ConfigError.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
/// Reads a file; PROBSAFE_SEED, when set, overrides the seed.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full TOML rendering; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& c);
/// FNV-1a of serialize_config.
std::uint64_t config_hash(const ExperimentConfig& c);

/// Checks shapes and ranges; throws ConfigError.
void validate_config(const ExperimentConfig& c);

std::string controller_label(const ControllerConfig& c);

}  // namespace probsafe
