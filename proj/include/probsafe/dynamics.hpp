#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace probsafe {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// f(x) = A x + a0, g(x) = B, sigma(x) = S. Systems built through
/// ControlAffineSystem::affine() carry this form so the ensemble engine can
/// use the vectorized kernels.
struct AffineForm {
  Mat A;
  Vec a0;
  Mat B;
  Mat S;
};

/// dX = (f(X) + g(X) U) dt + sigma(X) dW with X in R^n, U in R^m, W in R^w.
class ControlAffineSystem {
 public:
  using VectorField = std::function<Vec(const Vec&)>;
  using MatrixField = std::function<Mat(const Vec&)>;

  ControlAffineSystem(int dim_state, int dim_input, int dim_noise, VectorField drift,
                      MatrixField input_matrix, MatrixField diffusion,
                      bool constant_diffusion = false);

  static ControlAffineSystem affine(Mat A, Vec a0, Mat B, Mat S);

  int dim_state() const { return n_; }
  int dim_input() const { return m_; }
  int dim_noise() const { return w_; }

  /// Shape-checked evaluations; throw std::logic_error on a shape mismatch.
  Vec drift(const Vec& x) const;
  Mat input_matrix(const Vec& x) const;
  Mat diffusion(const Vec& x) const;

  bool constant_diffusion() const { return constant_diffusion_; }
  const std::optional<AffineForm>& affine_form() const { return affine_; }

 private:
  int n_, m_, w_;
  VectorField f_;
  MatrixField g_;
  MatrixField sigma_;
  bool constant_diffusion_;
  std::optional<AffineForm> affine_;
};

/// phi(x) = c . x + d
struct AffineBarrier {
  Vec c;
  double d;
};

/// Barrier function phi with analytic gradient and Hessian. The safe set with
/// margin L is {x : phi(x) >= L}.
class BarrierSpec {
 public:
  using ScalarField = std::function<double(const Vec&)>;
  using VectorField = std::function<Vec(const Vec&)>;
  using MatrixField = std::function<Mat(const Vec&)>;

  /// Verifies grad/hess against central finite differences of phi at every
  /// state in `check_points` (relative tolerance 1e-5); throws
  /// std::invalid_argument on disagreement.
  BarrierSpec(ScalarField phi, VectorField grad, MatrixField hess,
              std::span<const Vec> check_points = {});

  static BarrierSpec affine(Vec c, double d);

  double phi(const Vec& x) const { return phi_(x); }
  Vec grad(const Vec& x) const { return grad_(x); }
  Mat hess(const Vec& x) const { return hess_(x); }

  const std::optional<AffineBarrier>& affine_form() const { return affine_; }

 private:
  ScalarField phi_;
  VectorField grad_;
  MatrixField hess_;
  std::optional<AffineBarrier> affine_;
};

/// Largest relative disagreement between the analytic derivatives of `b` and
/// central finite differences of phi at `x`.
double barrier_derivative_mismatch(const BarrierSpec& b, const Vec& x);

enum class HorizonMode { Fixed, Receding };

struct HorizonSpec {
  HorizonMode mode = HorizonMode::Fixed;
  double H = 10.0;

  /// T_t: H (fixed) or H - t (receding; throws std::domain_error for t > H).
  double remaining(double t) const;
  /// f_T: 0 (fixed) or -1 (receding).
  double rate() const { return mode == HorizonMode::Fixed ? 0.0 : -1.0; }
};

/// dL = f_ell(L) dt, L_0 = ell0. An empty f_ell is the fixed margin f_ell = 0.
struct MarginSpec {
  double ell0 = 0.0;
  std::function<double(double)> f_ell;

  bool is_fixed() const { return !f_ell; }
  double rate(double L) const { return f_ell ? f_ell(L) : 0.0; }
};

/// Z = (T, L, phi(x), x).
struct AugmentedState {
  double T = 0.0;
  double L = 0.0;
  double phi = 0.0;
  Vec x;

  /// Stacks into an R^{n+3} vector in (T, L, phi, x) order.
  Vec stacked() const;
};

inline constexpr int kZT = 0;
inline constexpr int kZL = 1;
inline constexpr int kZPhi = 2;
inline constexpr int kZX = 3;

/// Output of one policy evaluation.
struct StepOutcome {
  Vec u;
  bool condition_satisfied = true;
  bool fell_back = false;
  /// Left side minus right side of the active safety condition (0 for
  /// policies without one).
  double slack = 0.0;
};

/// Deterministic feedback (x, L, T) -> u; see controllers.hpp for the policies.
using ControlLaw = std::function<StepOutcome(const AugmentedState&)>;

/// u = -K x + k0. Attached to closed loops so the ensemble engine can use the
/// vectorized path.
struct LinearFeedback {
  Mat K;
  Vec k0;
};

struct Trajectory {
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> inputs;
  std::vector<double> horizons;  // T_t at each time
  std::vector<double> margins;   // L_t at each time
  std::vector<StepOutcome> outcomes;

  std::size_t steps() const { return inputs.size(); }
};

/// Raised when an Euler-Maruyama step produces a non-finite state.
class IntegrationBlowup : public std::runtime_error {
 public:
  IntegrationBlowup(const std::string& what, Vec state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const Vec& state() const { return state_; }

 private:
  Vec state_;
};

/// x + (f(x) + g(x) u) dt + sigma(x) dW.
Vec euler_maruyama_step(const ControlAffineSystem& sys, const Vec& x, const Vec& u, double dt,
                        const Vec& dW);

/// Number of steps that cover [0, t_end] with step dt (ceil, tolerant to
/// representation error in t_end / dt).
std::uint32_t step_count(double t_end, double dt);

/// Closed-loop simulation. The policy sees the AugmentedState at each step
/// (phi recomputed from x, T and L advanced per the horizon and margin specs).
/// Noise for step k comes from NoiseStream(seed) at (stream, k).
Trajectory simulate(const ControlAffineSystem& sys, const ControlLaw& policy,
                    const BarrierSpec& barrier, const HorizonSpec& horizon,
                    const MarginSpec& margin, const Vec& x0, double dt, double t_end,
                    std::uint64_t seed, std::uint64_t stream = 0);

AugmentedState augment(const BarrierSpec& barrier, const Vec& x, double T, double L);

/// L_f phi(x) + 1/2 tr(sigma sigma^T Hess phi(x)).
double f_phi(const ControlAffineSystem& sys, const BarrierSpec& barrier, const Vec& x);

/// Coefficients of dZ = (f~(Z) + g~(Z) U) dt + sigma~(Z) dW.
class AugmentedDynamics {
 public:
  AugmentedDynamics(ControlAffineSystem sys, BarrierSpec barrier, HorizonSpec horizon,
                    MarginSpec margin);

  int dim() const { return sys_.dim_state() + 3; }
  const ControlAffineSystem& system() const { return sys_; }
  const BarrierSpec& barrier() const { return barrier_; }
  const HorizonSpec& horizon() const { return horizon_; }
  const MarginSpec& margin() const { return margin_; }

  /// The phi entry of z is not read; every row is evaluated from x.
  Vec f(const Vec& z) const;
  Mat g(const Vec& z) const;
  Mat sigma(const Vec& z) const;

 private:
  ControlAffineSystem sys_;
  BarrierSpec barrier_;
  HorizonSpec horizon_;
  MarginSpec margin_;
};

}  // namespace probsafe
