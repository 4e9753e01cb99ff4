#include "probsafe/safety_prob.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include "probsafe/parallel.hpp"
#include "probsafe/rng.hpp"
#include "probsafe/simd/kernels.hpp"

namespace probsafe {

std::string_view to_string(ProbabilityType p) {
  switch (p) {
    case ProbabilityType::I: return "I";
    case ProbabilityType::II: return "II";
    case ProbabilityType::III: return "III";
    case ProbabilityType::IV: return "IV";
  }
  return "?";
}

ProbabilityType parse_probability_type(std::string_view s) {
  std::string up(s);
  for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "I" || up == "1") return ProbabilityType::I;
  if (up == "II" || up == "2") return ProbabilityType::II;
  if (up == "III" || up == "3") return ProbabilityType::III;
  if (up == "IV" || up == "4") return ProbabilityType::IV;
  throw std::invalid_argument("unknown probability type '" + std::string(s) + "'");
}

MCEstimate make_estimate(std::uint64_t successes, std::uint64_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("estimate needs at least one sample");
  const double p = static_cast<double>(successes) / static_cast<double>(n);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n)), n, seed};
}

double worst_margin(const Trajectory& traj, const BarrierSpec& barrier) {
  if (traj.states.empty()) throw std::invalid_argument("worst_margin: empty trajectory");
  double m = kNever;
  for (const Vec& x : traj.states) m = std::min(m, barrier.phi(x));
  return m;
}

double best_margin(const Trajectory& traj, const BarrierSpec& barrier) {
  if (traj.states.empty()) throw std::invalid_argument("best_margin: empty trajectory");
  double m = -kNever;
  for (const Vec& x : traj.states) m = std::max(m, barrier.phi(x));
  return m;
}

double first_exit_time(const Trajectory& traj, const BarrierSpec& barrier, double L) {
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    if (barrier.phi(traj.states[k]) < L) return traj.times[k];
  return kNever;
}

double first_entry_time(const Trajectory& traj, const BarrierSpec& barrier, double L) {
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    if (barrier.phi(traj.states[k]) >= L) return traj.times[k];
  return kNever;
}

ClosedLoop linear_closed_loop(ControlAffineSystem sys, LinearFeedback fb, BarrierSpec barrier,
                              HorizonSpec horizon, MarginSpec margin) {
  if (fb.K.rows() != sys.dim_input() || fb.K.cols() != sys.dim_state() ||
      fb.k0.size() != sys.dim_input())
    throw std::invalid_argument("linear feedback has wrong shape");
  ControlLaw law = [K = fb.K, k0 = fb.k0](const AugmentedState& z) {
    StepOutcome out;
    out.u = -K * z.x + k0;
    return out;
  };
  return ClosedLoop{std::move(sys), std::move(law), std::move(barrier), horizon, std::move(margin),
                    std::move(fb)};
}

namespace {

struct ScalarAffineLoop {
  double a, c, s;           // x' = x + (a x + c) dt + s dW
  double slope, offset;     // phi = slope x + offset
};

std::optional<ScalarAffineLoop> scalar_affine_loop(const ClosedLoop& loop) {
  const auto& sys = loop.system;
  if (!loop.linear || sys.dim_state() != 1 || sys.dim_input() != 1 || sys.dim_noise() != 1)
    return std::nullopt;
  if (!sys.affine_form() || !loop.barrier.affine_form() || !loop.margin.is_fixed())
    return std::nullopt;
  const AffineForm& af = *sys.affine_form();
  const AffineBarrier& ab = *loop.barrier.affine_form();
  const double B = af.B(0, 0);
  return ScalarAffineLoop{af.A(0, 0) - B * loop.linear->K(0, 0), af.a0[0] + B * loop.linear->k0[0],
                          af.S(0, 0), ab.c[0], ab.d};
}

void init_stats(PathStats& st, std::size_t n, std::uint32_t n_steps) {
  st.n_steps = n_steps;
  st.min_gap.assign(n, kNever);
  st.max_gap.assign(n, -kNever);
  st.exit_step.assign(n, -1);
  st.entry_step.assign(n, -1);
}

void run_simd_path(const ScalarAffineLoop& p, double x0, double L0, const EnsembleOptions& opt,
                   PathStats& st) {
  const auto& kt = simd::kernels();
  const NoiseStream noise(opt.seed);
  const auto key = noise.key();
  const double sqdt = std::sqrt(opt.dt);
  constexpr std::size_t kChunk = 256;
  parallel_for(
      st.size(), opt.threads,
      [&](std::size_t begin, std::size_t end) {
        const std::size_t cnt = end - begin;
        std::array<double, kChunk> x, dw;
        std::array<std::uint32_t, 4 * kChunk> words;
        std::fill_n(x.begin(), cnt, x0);
        for (std::uint32_t k = 0;; ++k) {
          kt.path_stats(cnt, x.data(), p.slope, p.offset, L0, static_cast<std::int32_t>(k),
                        st.min_gap.data() + begin, st.max_gap.data() + begin,
                        st.exit_step.data() + begin, st.entry_step.data() + begin);
          if (k == st.n_steps) break;
          kt.philox_batch(key[0], key[1], k, 0, opt.stream_offset + begin, cnt, words.data());
          for (std::size_t i = 0; i < cnt; ++i) {
            const PhiloxCounter blk{words[4 * i], words[4 * i + 1], words[4 * i + 2],
                                    words[4 * i + 3]};
            dw[i] = gaussian_pair(blk)[0] * sqdt;
          }
          kt.affine_step(cnt, x.data(), dw.data(), p.a, p.c, opt.dt, p.s);
        }
        for (std::size_t i = 0; i < cnt; ++i)
          if (!std::isfinite(x[i]))
            throw IntegrationBlowup("ensemble rollout diverged", Vec::Constant(1, x[i]));
      },
      kChunk);
}

void run_generic_path(const ClosedLoop& loop, const Vec& x0, double L0, double T,
                      const EnsembleOptions& opt, PathStats& st) {
  const NoiseStream noise(opt.seed);
  const int w = loop.system.dim_noise();
  parallel_for(
      st.size(), opt.threads,
      [&](std::size_t begin, std::size_t end) {
        Vec dW(w);
        for (std::size_t i = begin; i < end; ++i) {
          const std::uint64_t stream = opt.stream_offset + i;
          Vec x = x0;
          double L = L0;
          for (std::uint32_t k = 0;; ++k) {
            const double gap = loop.barrier.phi(x) - L;
            const auto step = static_cast<std::int32_t>(k);
            st.min_gap[i] = std::min(st.min_gap[i], gap);
            st.max_gap[i] = std::max(st.max_gap[i], gap);
            if (st.exit_step[i] < 0 && gap < 0.0) st.exit_step[i] = step;
            if (st.entry_step[i] < 0 && gap >= 0.0) st.entry_step[i] = step;
            if (k == st.n_steps) break;
            const double t = k * opt.dt;
            const double Tt = std::max(0.0, T + loop.horizon.rate() * t);
            const StepOutcome out = loop.law(AugmentedState{Tt, L, gap + L, x});
            noise.wiener_increments(stream, k, opt.dt,
                                    {dW.data(), static_cast<std::size_t>(w)});
            x = euler_maruyama_step(loop.system, x, out.u, opt.dt, dW);
            L += loop.margin.rate(L) * opt.dt;
          }
        }
      },
      64);
}

}  // namespace

PathStats ensemble_path_stats(const ClosedLoop& loop, const Vec& x0, double L0, double T,
                              const EnsembleOptions& opt) {
  if (opt.n_samples < 1) throw std::invalid_argument("ensemble needs n_samples >= 1");
  if (!(opt.dt > 0.0)) throw std::invalid_argument("ensemble needs dt > 0");
  if (!(T >= 0.0)) throw std::invalid_argument("ensemble needs T >= 0");
  if (x0.size() != loop.system.dim_state())
    throw std::invalid_argument("ensemble start state has wrong size");
  PathStats st;
  init_stats(st, opt.n_samples, step_count(T, opt.dt));
  const auto fast = opt.allow_simd_path ? scalar_affine_loop(loop) : std::nullopt;
  if (fast) {
    run_simd_path(*fast, x0[0], L0, opt, st);
    st.used_simd_path = true;
  } else {
    run_generic_path(loop, x0, L0, T, opt, st);
  }
  return st;
}

bool event_holds(ProbabilityType p, const PathStats& stats, std::size_t i) {
  switch (p) {
    case ProbabilityType::I: return stats.min_gap[i] >= 0.0;
    case ProbabilityType::III: return stats.max_gap[i] >= 0.0;
    default: return event_holds_until(p, stats, i, stats.n_steps);
  }
}

bool event_holds_until(ProbabilityType p, const PathStats& stats, std::size_t i,
                       std::uint32_t steps) {
  const auto limit = static_cast<std::int32_t>(steps);
  if (is_invariance(p)) {
    const std::int32_t e = stats.exit_step[i];
    return e < 0 || e > limit;
  }
  const std::int32_t e = stats.entry_step[i];
  return e >= 0 && e <= limit;
}

MCEstimate estimate(ProbabilityType p, const PathStats& stats, std::uint64_t seed) {
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < stats.size(); ++i) hits += event_holds(p, stats, i) ? 1 : 0;
  return make_estimate(hits, stats.size(), seed);
}

MCEstimate mc_probability(const ClosedLoop& loop, ProbabilityType p, const Vec& x, double L,
                          double T, const EnsembleOptions& opt) {
  if (!(T > 0.0)) throw std::invalid_argument("mc_probability needs T > 0");
  return estimate(p, ensemble_path_stats(loop, x, L, T, opt), opt.seed);
}

}  // namespace probsafe
