#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "probsafe/dynamics.hpp"

namespace probsafe {

/// I: P(worst margin >= L), II: P(first exit time > T),
/// III: P(best margin >= L), IV: P(first entry time <= T).
enum class ProbabilityType { I, II, III, IV };

std::string_view to_string(ProbabilityType p);
/// Accepts "I".."IV" (case-insensitive) or "1".."4"; throws std::invalid_argument.
ProbabilityType parse_probability_type(std::string_view s);

/// Types I/II describe staying in the safe set, III/IV reaching it.
inline bool is_invariance(ProbabilityType p) {
  return p == ProbabilityType::I || p == ProbabilityType::II;
}

struct MCEstimate {
  double value = 0.0;
  double std_error = 0.0;  // sqrt(p (1 - p) / n)
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
};

MCEstimate make_estimate(std::uint64_t successes, std::uint64_t n, std::uint64_t seed);

/// Duration value for "never within the horizon".
inline constexpr double kNever = std::numeric_limits<double>::infinity();

double worst_margin(const Trajectory& traj, const BarrierSpec& barrier);
double best_margin(const Trajectory& traj, const BarrierSpec& barrier);
/// First sampled time with phi < L, or kNever.
double first_exit_time(const Trajectory& traj, const BarrierSpec& barrier, double L);
/// First sampled time with phi >= L, or kNever.
double first_entry_time(const Trajectory& traj, const BarrierSpec& barrier, double L);

/// Everything needed to roll out one closed loop.
struct ClosedLoop {
  ControlAffineSystem system;
  ControlLaw law;
  BarrierSpec barrier;
  HorizonSpec horizon;
  MarginSpec margin;
  /// Set when `law` is u = -K x + k0 with no safety filter; enables the
  /// vectorized ensemble path for scalar affine systems.
  std::optional<LinearFeedback> linear;
};

/// Closed loop of u = -K x + k0.
ClosedLoop linear_closed_loop(ControlAffineSystem sys, LinearFeedback fb, BarrierSpec barrier,
                              HorizonSpec horizon, MarginSpec margin);

struct EnsembleOptions {
  double dt = 0.1;
  std::uint32_t n_samples = 10000;
  std::uint64_t seed = 0;
  /// Sample i uses noise stream stream_offset + i.
  std::uint64_t stream_offset = 0;
  unsigned threads = 0;
  bool allow_simd_path = true;
};

/// Per-sample statistics of the gap phi(X_k) - L_k over steps 0..n_steps.
/// Steps are -1 when the event never happens.
struct PathStats {
  std::uint32_t n_steps = 0;
  std::vector<double> min_gap;
  std::vector<double> max_gap;
  std::vector<std::int32_t> exit_step;
  std::vector<std::int32_t> entry_step;
  bool used_simd_path = false;

  std::size_t size() const { return min_gap.size(); }
};

/// Runs n_samples rollouts from (x0, L0) for step_count(T, dt) steps. The
/// policy sees T_t = T for a fixed horizon and T - t for a receding one.
PathStats ensemble_path_stats(const ClosedLoop& loop, const Vec& x0, double L0, double T,
                              const EnsembleOptions& opt);

/// Whether sample i satisfies the ptype event over the first `steps` steps.
/// Types I and III read the margin statistics, II and IV the hitting steps;
/// with steps == stats.n_steps the pairs agree exactly.
bool event_holds(ProbabilityType p, const PathStats& stats, std::size_t i);
/// Event over a shorter prefix [0, steps]; only the hitting-step types
/// support this (I and III are mapped to II and IV).
bool event_holds_until(ProbabilityType p, const PathStats& stats, std::size_t i,
                       std::uint32_t steps);

MCEstimate estimate(ProbabilityType p, const PathStats& stats, std::uint64_t seed);

MCEstimate mc_probability(const ClosedLoop& loop, ProbabilityType p, const Vec& x, double L,
                          double T, const EnsembleOptions& opt);

}  // namespace probsafe
