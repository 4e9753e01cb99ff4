#include "probsafe/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "probsafe/rng.hpp"

namespace probsafe {

namespace {

std::string shape_error(const char* what, Eigen::Index r, Eigen::Index c, Eigen::Index er,
                        Eigen::Index ec) {
  std::ostringstream os;
  os << what << " returned shape " << r << "x" << c << ", expected " << er << "x" << ec;
  return os.str();
}

}  // namespace

ControlAffineSystem::ControlAffineSystem(int dim_state, int dim_input, int dim_noise,
                                         VectorField drift, MatrixField input_matrix,
                                         MatrixField diffusion, bool constant_diffusion)
    : n_(dim_state),
      m_(dim_input),
      w_(dim_noise),
      f_(std::move(drift)),
      g_(std::move(input_matrix)),
      sigma_(std::move(diffusion)),
      constant_diffusion_(constant_diffusion) {
  if (n_ <= 0 || m_ <= 0 || w_ <= 0)
    throw std::invalid_argument("system dimensions must be positive");
  if (!f_ || !g_ || !sigma_) throw std::invalid_argument("system fields must be callable");
}

ControlAffineSystem ControlAffineSystem::affine(Mat A, Vec a0, Mat B, Mat S) {
  const auto n = A.rows();
  if (A.cols() != n || a0.size() != n || B.rows() != n || S.rows() != n)
    throw std::invalid_argument("affine system: inconsistent shapes");
  ControlAffineSystem sys(
      static_cast<int>(n), static_cast<int>(B.cols()), static_cast<int>(S.cols()),
      [A, a0](const Vec& x) -> Vec { return A * x + a0; }, [B](const Vec&) -> Mat { return B; },
      [S](const Vec&) -> Mat { return S; }, true);
  sys.affine_ = AffineForm{std::move(A), std::move(a0), std::move(B), std::move(S)};
  return sys;
}

Vec ControlAffineSystem::drift(const Vec& x) const {
  Vec v = f_(x);
  if (v.size() != n_) throw std::logic_error(shape_error("drift", v.size(), 1, n_, 1));
  return v;
}

Mat ControlAffineSystem::input_matrix(const Vec& x) const {
  Mat v = g_(x);
  if (v.rows() != n_ || v.cols() != m_)
    throw std::logic_error(shape_error("input_matrix", v.rows(), v.cols(), n_, m_));
  return v;
}

Mat ControlAffineSystem::diffusion(const Vec& x) const {
  Mat v = sigma_(x);
  if (v.rows() != n_ || v.cols() != w_)
    throw std::logic_error(shape_error("diffusion", v.rows(), v.cols(), n_, w_));
  return v;
}

double barrier_derivative_mismatch(const BarrierSpec& b, const Vec& x) {
  const auto n = x.size();
  const Vec g = b.grad(x);
  const Mat H = b.hess(x);
  if (g.size() != n || H.rows() != n || H.cols() != n)
    throw std::invalid_argument("barrier derivative has wrong shape");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double dphi = (b.phi(xp) - b.phi(xm)) / (2.0 * h);
    worst = std::max(worst, std::abs(dphi - g[i]) / std::max(1.0, std::abs(g[i])));
    const Vec dgrad = (b.grad(xp) - b.grad(xm)) / (2.0 * h);
    for (Eigen::Index j = 0; j < n; ++j)
      worst = std::max(worst, std::abs(dgrad[j] - H(j, i)) / std::max(1.0, std::abs(H(j, i))));
  }
  return worst;
}

BarrierSpec::BarrierSpec(ScalarField phi, VectorField grad, MatrixField hess,
                         std::span<const Vec> check_points)
    : phi_(std::move(phi)), grad_(std::move(grad)), hess_(std::move(hess)) {
  if (!phi_ || !grad_ || !hess_) throw std::invalid_argument("barrier fields must be callable");
  for (const Vec& x : check_points) {
    const double mismatch = barrier_derivative_mismatch(*this, x);
    if (!(mismatch <= 1e-5)) {
      std::ostringstream os;
      os << "barrier derivatives disagree with finite differences (relative error " << mismatch
         << ")";
      throw std::invalid_argument(os.str());
    }
  }
}

BarrierSpec BarrierSpec::affine(Vec c, double d) {
  const auto n = c.size();
  BarrierSpec b([c, d](const Vec& x) { return c.dot(x) + d; },
                [c](const Vec&) -> Vec { return c; },
                [n](const Vec&) -> Mat { return Mat::Zero(n, n); });
  b.affine_ = AffineBarrier{std::move(c), d};
  return b;
}

double HorizonSpec::remaining(double t) const {
  if (mode == HorizonMode::Fixed) return H;
  if (t > H * (1.0 + 1e-12)) throw std::domain_error("receding horizon evaluated past H");
  return std::max(0.0, H - t);
}

Vec AugmentedState::stacked() const {
  Vec z(x.size() + 3);
  z[kZT] = T;
  z[kZL] = L;
  z[kZPhi] = phi;
  z.tail(x.size()) = x;
  return z;
}

AugmentedState augment(const BarrierSpec& barrier, const Vec& x, double T, double L) {
  return AugmentedState{T, L, barrier.phi(x), x};
}

Vec euler_maruyama_step(const ControlAffineSystem& sys, const Vec& x, const Vec& u, double dt,
                        const Vec& dW) {
  if (!(dt >= 0.0)) throw std::invalid_argument("euler_maruyama_step: dt must be >= 0");
  if (x.size() != sys.dim_state() || u.size() != sys.dim_input() || dW.size() != sys.dim_noise())
    throw std::invalid_argument("euler_maruyama_step: argument shape mismatch");
  Vec next = x + (sys.drift(x) + sys.input_matrix(x) * u) * dt + sys.diffusion(x) * dW;
  if (!next.allFinite()) {
    std::ostringstream os;
    os << "integration blow-up from state [" << x.transpose() << "]";
    throw IntegrationBlowup(os.str(), x);
  }
  return next;
}

std::uint32_t step_count(double t_end, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const double ratio = t_end / dt;
  const double steps = std::ceil(ratio - 1e-9 * std::max(1.0, ratio));
  return static_cast<std::uint32_t>(std::max(0.0, steps));
}

Trajectory simulate(const ControlAffineSystem& sys, const ControlLaw& policy,
                    const BarrierSpec& barrier, const HorizonSpec& horizon,
                    const MarginSpec& margin, const Vec& x0, double dt, double t_end,
                    std::uint64_t seed, std::uint64_t stream) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
  if (!(t_end >= dt * (1.0 - 1e-12))) throw std::invalid_argument("simulate: t_end must be >= dt");
  if (x0.size() != sys.dim_state()) throw std::invalid_argument("simulate: x0 has wrong size");
  const std::uint32_t n_steps = step_count(t_end, dt);
  if (horizon.mode == HorizonMode::Receding && n_steps * dt > horizon.H * (1.0 + 1e-12))
    throw std::invalid_argument("simulate: receding horizon would go negative before t_end");

  const NoiseStream noise(seed);
  Trajectory traj;
  traj.dt = dt;
  traj.seed = seed;
  traj.stream = stream;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.inputs.reserve(n_steps);
  traj.outcomes.reserve(n_steps);

  Vec x = x0;
  double L = margin.ell0;
  Vec dW(sys.dim_noise());
  for (std::uint32_t k = 0;; ++k) {
    const double t = k * dt;
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.margins.push_back(L);
    traj.horizons.push_back(horizon.remaining(t));
    if (k == n_steps) break;

    StepOutcome out = policy(augment(barrier, x, traj.horizons.back(), L));
    if (out.u.size() != sys.dim_input())
      throw std::logic_error("simulate: policy returned an input of the wrong size");
    noise.wiener_increments(stream, k, dt, {dW.data(), static_cast<std::size_t>(dW.size())});
    x = euler_maruyama_step(sys, x, out.u, dt, dW);
    L = L + margin.rate(L) * dt;
    traj.inputs.push_back(out.u);
    traj.outcomes.push_back(std::move(out));
  }
  return traj;
}

double f_phi(const ControlAffineSystem& sys, const BarrierSpec& barrier, const Vec& x) {
  const Mat sigma = sys.diffusion(x);
  return sys.drift(x).dot(barrier.grad(x)) +
         0.5 * (sigma * sigma.transpose() * barrier.hess(x)).trace();
}

AugmentedDynamics::AugmentedDynamics(ControlAffineSystem sys, BarrierSpec barrier,
                                     HorizonSpec horizon, MarginSpec margin)
    : sys_(std::move(sys)),
      barrier_(std::move(barrier)),
      horizon_(horizon),
      margin_(std::move(margin)) {}

Vec AugmentedDynamics::f(const Vec& z) const {
  const int n = sys_.dim_state();
  const Vec x = z.tail(n);
  Vec out(n + 3);
  out[kZT] = horizon_.rate();
  out[kZL] = margin_.rate(z[kZL]);
  out[kZPhi] = f_phi(sys_, barrier_, x);
  out.tail(n) = sys_.drift(x);
  return out;
}

Mat AugmentedDynamics::g(const Vec& z) const {
  const int n = sys_.dim_state();
  const Vec x = z.tail(n);
  const Mat gx = sys_.input_matrix(x);
  Mat out = Mat::Zero(n + 3, sys_.dim_input());
  out.row(kZPhi) = barrier_.grad(x).transpose() * gx;
  out.bottomRows(n) = gx;
  return out;
}

Mat AugmentedDynamics::sigma(const Vec& z) const {
  const int n = sys_.dim_state();
  const Vec x = z.tail(n);
  const Mat sx = sys_.diffusion(x);
  Mat out = Mat::Zero(n + 3, sys_.dim_noise());
  out.row(kZPhi) = barrier_.grad(x).transpose() * sx;
  out.bottomRows(n) = sx;
  return out;
}

}  // namespace probsafe
