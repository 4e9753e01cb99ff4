#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "probsafe/dynamics.hpp"
#include "probsafe/grid.hpp"
#include "probsafe/safety_prob.hpp"

namespace probsafe {

enum class PolicyTag { NominalClosedLoop, OverallClosedLoop };
enum class Provenance { CDE, MC, MCSmoothed };

std::string_view to_string(PolicyTag t);
std::string_view to_string(Provenance p);
PolicyTag parse_policy_tag(std::string_view s);
Provenance parse_provenance(std::string_view s);

/// Gridded safe/recovery probability F over (T, x, [L]).
///
/// With a fixed margin there is no L axis and `margin` records the value the
/// field was computed for. Derivatives with respect to the phi coordinate of
/// the augmented state are reported as zero: the stored function already
/// depends on x only, so every phi-dependence is carried by the x entries.
struct SafeProbabilityField {
  ProbabilityType ptype = ProbabilityType::I;
  PolicyTag policy_tag = PolicyTag::NominalClosedLoop;
  Provenance provenance = Provenance::CDE;
  GridSpec grid;
  double margin = 0.0;
  std::vector<double> values;
  /// Per-node Monte Carlo standard error; empty for CDE fields.
  std::vector<double> std_error;

  double at(std::size_t flat) const { return values[flat]; }
};

/// Value, gradient and Hessian in augmented coordinates (T, L, phi, x).
struct FieldSample {
  double value = 0.0;
  Vec gradient;
  Mat hessian;
  bool out_of_domain = false;
};

/// Multilinear interpolation of the node values and of nodal central
/// differences (one-sided second order at the edges). Queries outside the
/// grid are clamped to it and flagged.
FieldSample field_sample(const SafeProbabilityField& field, const AugmentedState& z);
double field_value(const SafeProbabilityField& field, const AugmentedState& z,
                   bool* out_of_domain = nullptr);
Vec field_gradient(const SafeProbabilityField& field, const AugmentedState& z);
Mat field_hessian(const SafeProbabilityField& field, const AugmentedState& z);

/// D_F(z, u) = L_f~F + (L_g~F) u + 1/2 tr(sigma~ sigma~^T Hess F), split into its
/// control-independent part and the input gain.
struct GeneratorParts {
  double F = 0.0;
  double drift = 0.0;      // L_f~F
  double diffusion = 0.0;  // 1/2 tr(sigma~ sigma~^T Hess F)
  Vec gain;                // (L_g~F)^T, length m
  bool out_of_domain = false;

  double value(const Vec& u) const { return drift + diffusion + gain.dot(u); }
};

GeneratorParts generator_parts(const SafeProbabilityField& field, const AugmentedDynamics& dyn,
                               const AugmentedState& z);
double generator_value(const SafeProbabilityField& field, const AugmentedDynamics& dyn,
                       const AugmentedState& z, const Vec& u);

enum class TimeScheme { Auto, Explicit, Implicit };

struct CdeOptions {
  TimeScheme scheme = TimeScheme::Auto;
  /// Internal marching step; 0 picks one from the stability bound (explicit)
  /// or from `implicit_substeps` (implicit).
  double dT = 0.0;
  std::size_t implicit_substeps = 4;
  /// Auto mode marches explicitly when this many substeps per stored T
  /// interval are enough, implicitly otherwise.
  std::size_t max_explicit_substeps = 10;
};

/// Thrown when an explicit march is requested with a step above the
/// stability bound.
class CflViolation : public std::runtime_error {
 public:
  CflViolation(const std::string& what, double required_dT)
      : std::runtime_error(what), required_dT_(required_dT) {}
  double required_dT() const { return required_dT_; }

 private:
  double required_dT_;
};

/// Thrown when a solved slice leaves [-1e-9, 1 + 1e-9].
class SchemeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CdeReport {
  TimeScheme scheme_used = TimeScheme::Explicit;
  double dT = 0.0;
  double stability_bound = 0.0;
  std::size_t substeps_per_slice = 0;
  double max_clip = 0.0;  // largest excursion outside [0, 1] before clipping
};

/// Marches dF/dT = A F from the indicator slice at T = 0, where A is the
/// generator of the closed loop `loop` (policy evaluated with T = grid.T.max).
/// Unsafe nodes (phi < L) are held at 0 for types I/II; safe nodes
/// (phi >= L) are held at 1 for types III/IV. Far-field edges use a zero
/// normal derivative.
SafeProbabilityField solve_cde(const ClosedLoop& loop, ProbabilityType ptype, const GridSpec& grid,
                               PolicyTag tag = PolicyTag::NominalClosedLoop,
                               const CdeOptions& opt = {}, CdeReport* report = nullptr);

/// Monte Carlo field: for every spatial node, `opt.n_samples` rollouts with
/// common random numbers (sample i uses stream i at every node).
SafeProbabilityField mc_field(const ClosedLoop& loop, ProbabilityType ptype, const GridSpec& grid,
                              const EnsembleOptions& opt,
                              PolicyTag tag = PolicyTag::NominalClosedLoop);

struct SmoothingOptions {
  std::size_t sweeps = 3;
  double weight = 0.8;
  /// Largest allowed change of any node value relative to the raw field.
  double max_deviation = 0.15;
  CdeOptions cde;
};

/// Relaxes a raw (Monte Carlo) field toward the CDE: each sweep replaces
/// slice k with raw_k + w (step(F_{k-1}) - raw_k), limited to raw_k +-
/// max_deviation, where step() is one stored-T interval of the solve_cde
/// march. Initial and boundary slices are re-pinned on every sweep.
SafeProbabilityField smooth_mc_field(const SafeProbabilityField& raw, const ClosedLoop& loop,
                                     const SmoothingOptions& opt = {});

/// Field file: "key: value" header lines, a "---" line, then the values.
/// Binary files store little-endian doubles, text files one value per line.
void write_field(const SafeProbabilityField& field, const std::filesystem::path& path,
                 bool binary = true);
SafeProbabilityField read_field(const std::filesystem::path& path);
/// One row per node: T, x_1..x_n, [L], value.
void write_field_csv(const SafeProbabilityField& field, const std::filesystem::path& path);

}  // namespace probsafe
