#include "probsafe/cde_field.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace probsafe {

std::string_view to_string(PolicyTag t) {
  return t == PolicyTag::NominalClosedLoop ? "nominal" : "overall";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::CDE: return "cde";
    case Provenance::MC: return "mc";
    case Provenance::MCSmoothed: return "mc_smoothed";
  }
  return "?";
}

PolicyTag parse_policy_tag(std::string_view s) {
  if (s == "nominal") return PolicyTag::NominalClosedLoop;
  if (s == "overall") return PolicyTag::OverallClosedLoop;
  throw std::invalid_argument("unknown policy tag '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
  if (s == "cde") return Provenance::CDE;
  if (s == "mc") return Provenance::MC;
  if (s == "mc_smoothed") return Provenance::MCSmoothed;
  throw std::invalid_argument("unknown field source '" + std::string(s) + "'");
}

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor>;

// Spatial layout of one T slice: axes x_1..x_n then optionally L.
struct SliceLayout {
  std::vector<Axis> axes;
  std::vector<std::size_t> strides;
  std::size_t n_x = 0;
  bool has_L = false;
  std::size_t size = 1;

  explicit SliceLayout(const GridSpec& g) : n_x(g.x.size()), has_L(g.L.has_value()) {
    axes = g.x;
    if (g.L) axes.push_back(*g.L);
    strides.assign(axes.size(), 1);
    for (std::size_t d = axes.size(); d-- > 1;) strides[d - 1] = strides[d] * axes[d].nodes;
    for (const Axis& a : axes) size *= a.nodes;
  }

  std::size_t index_along(std::size_t flat, std::size_t d) const {
    return (flat / strides[d]) % axes[d].nodes;
  }
  // Neighbor index or -1 when it would leave the grid.
  long neighbor(std::size_t flat, std::size_t d, int dir) const {
    const std::size_t i = index_along(flat, d);
    if (dir < 0 && i == 0) return -1;
    if (dir > 0 && i + 1 == axes[d].nodes) return -1;
    return static_cast<long>(flat) + dir * static_cast<long>(strides[d]);
  }
  long neighbor2(std::size_t flat, std::size_t d, int dd, std::size_t e, int de) const {
    const long a = neighbor(flat, d, dd);
    if (a < 0) return -1;
    return neighbor(static_cast<std::size_t>(a), e, de);
  }
};

// Spatial generator of the closed loop on one slice plus the pinned nodes.
class CdeStepper {
 public:
  CdeStepper(const ClosedLoop& loop, ProbabilityType ptype, const GridSpec& grid,
             const CdeOptions& opt)
      : layout_(grid), hT_(grid.T.spacing()) {
    grid.validate();
    const int n = loop.system.dim_state();
    if (static_cast<std::size_t>(n) != grid.x.size())
      throw std::invalid_argument("CDE grid needs one x axis per state dimension");
    if (!loop.margin.is_fixed() && !grid.L)
      throw std::invalid_argument("a varying margin needs an L axis in the grid");
    build(loop, ptype, grid.T.max);
    plan(opt);
  }

  const std::vector<double>& initial() const { return initial_; }
  const std::vector<char>& pinned() const { return pinned_; }
  const std::vector<double>& pinned_value() const { return pinned_value_; }
  const CdeReport& report() const { return report_; }
  std::size_t slice_size() const { return layout_.size; }

  // Advances one stored T interval in place.
  void advance(Eigen::VectorXd& F) const {
    if (report_.scheme_used == TimeScheme::Explicit) {
      for (std::size_t k = 0; k < report_.substeps_per_slice; ++k) {
        Eigen::VectorXd AF = A_ * F;
        F += report_.dT * AF;
      }
    } else {
      for (std::size_t k = 0; k < report_.substeps_per_slice; ++k) {
        Eigen::VectorXd next = lu_->solve(F);
        if (lu_->info() != Eigen::Success) throw SchemeFailure("implicit CDE solve failed");
        F = std::move(next);
        // Pivoting leaves round-off on the identity rows.
        for (Eigen::Index p = 0; p < F.size(); ++p)
          if (pinned_[static_cast<std::size_t>(p)]) F[p] = pinned_value_[static_cast<std::size_t>(p)];
      }
    }
  }

 private:
  void build(const ClosedLoop& loop, ProbabilityType ptype, double T_policy) {
    const std::size_t N = layout_.size;
    const std::size_t nx = layout_.n_x;
    const bool invariance = is_invariance(ptype);
    initial_.assign(N, 0.0);
    pinned_.assign(N, 0);
    pinned_value_.assign(N, 0.0);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(N * (1 + 2 * layout_.axes.size() + 4 * nx * nx));
    std::vector<double> h(layout_.axes.size());
    for (std::size_t d = 0; d < h.size(); ++d) h[d] = layout_.axes[d].spacing();

    Vec x(static_cast<Eigen::Index>(nx));
    double max_diag = 0.0;
    for (std::size_t p = 0; p < N; ++p) {
      for (std::size_t d = 0; d < nx; ++d)
        x[static_cast<Eigen::Index>(d)] = layout_.axes[d].coord(layout_.index_along(p, d));
      const double L = layout_.has_L ? layout_.axes[nx].coord(layout_.index_along(p, nx))
                                     : loop.margin.ell0;
      const double phi = loop.barrier.phi(x);
      const bool safe = phi - L >= 0.0;
      initial_[p] = safe ? 1.0 : 0.0;
      if (invariance != safe) {
        // I/II: unsafe nodes hold 0. III/IV: safe nodes hold 1.
        pinned_[p] = 1;
        pinned_value_[p] = initial_[p];
        continue;
      }

      const StepOutcome out = loop.law(AugmentedState{T_policy, L, phi, x});
      const Vec rho = loop.system.drift(x) + loop.system.input_matrix(x) * out.u;
      const Mat sig = loop.system.diffusion(x);
      const Mat S = sig * sig.transpose();
      if (!rho.allFinite() || !S.allFinite())
        throw SchemeFailure("non-finite closed-loop coefficients in the CDE domain");

      double diag = 0.0;
      auto add = [&](long q, double c) {
        if (c == 0.0) return;
        trip.emplace_back(static_cast<int>(p), static_cast<int>(q), c);
        diag -= c;
      };
      auto convect = [&](std::size_t d, double v) {
        const long q = layout_.neighbor(p, d, v > 0.0 ? 1 : -1);
        if (q >= 0) add(q, std::abs(v) / h[d]);
      };
      for (std::size_t d = 0; d < nx; ++d) {
        const auto di = static_cast<Eigen::Index>(d);
        convect(d, rho[di]);
        const double D = 0.5 * S(di, di) / (h[d] * h[d]);
        const long up = layout_.neighbor(p, d, 1);
        const long dn = layout_.neighbor(p, d, -1);
        // Mirror ghost at the far field gives a zero normal derivative.
        add(up >= 0 ? up : dn, D);
        add(dn >= 0 ? dn : up, D);
        for (std::size_t e = d + 1; e < nx; ++e) {
          const auto ei = static_cast<Eigen::Index>(e);
          const double s = S(di, ei);
          if (s == 0.0) continue;
          const long pd = layout_.neighbor(p, d, 1), md = layout_.neighbor(p, d, -1);
          const long pe = layout_.neighbor(p, e, 1), me = layout_.neighbor(p, e, -1);
          if (pd < 0 || md < 0 || pe < 0 || me < 0) continue;
          const double c = std::abs(s) / (2.0 * h[d] * h[e]);
          // Seven-point stencil; the axis neighbors carry -c for either sign.
          if (s > 0.0) {
            add(layout_.neighbor2(p, d, 1, e, 1), c);
            add(layout_.neighbor2(p, d, -1, e, -1), c);
          } else {
            add(layout_.neighbor2(p, d, 1, e, -1), c);
            add(layout_.neighbor2(p, d, -1, e, 1), c);
          }
          add(pd, -c);
          add(md, -c);
          add(pe, -c);
          add(me, -c);
        }
      }
      if (layout_.has_L) convect(nx, loop.margin.rate(L));
      if (diag != 0.0) trip.emplace_back(static_cast<int>(p), static_cast<int>(p), diag);
      max_diag = std::max(max_diag, -diag);
    }
    A_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    A_.setFromTriplets(trip.begin(), trip.end());
    A_.makeCompressed();
    report_.stability_bound = max_diag > 0.0 ? 1.0 / max_diag : kNever;
  }

  void plan(const CdeOptions& opt) {
    const double bound = report_.stability_bound;
    const auto explicit_steps = static_cast<std::size_t>(std::ceil(hT_ / bound - 1e-12));
    bool use_explicit = false;
    switch (opt.scheme) {
      case TimeScheme::Explicit:
        if (opt.dT > bound) {
          std::ostringstream os;
          os << "explicit CDE step " << opt.dT << " exceeds the stability bound " << bound;
          throw CflViolation(os.str(), bound);
        }
        use_explicit = true;
        break;
      case TimeScheme::Implicit: use_explicit = false; break;
      case TimeScheme::Auto:
        use_explicit = opt.dT > 0.0 ? opt.dT <= bound
                                    : std::max<std::size_t>(1, explicit_steps) <=
                                          opt.max_explicit_substeps;
        break;
    }
    std::size_t sub;
    if (opt.dT > 0.0)
      sub = static_cast<std::size_t>(std::ceil(hT_ / opt.dT - 1e-9));
    else if (use_explicit)
      sub = explicit_steps;
    else
      sub = opt.implicit_substeps;
    sub = std::max<std::size_t>(1, sub);
    report_.substeps_per_slice = sub;
    report_.dT = hT_ / static_cast<double>(sub);
    report_.scheme_used = use_explicit ? TimeScheme::Explicit : TimeScheme::Implicit;
    if (!use_explicit) {
      SpMat M(A_.rows(), A_.cols());
      M.setIdentity();
      M = M - report_.dT * A_;
      M.makeCompressed();
      lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
      lu_->analyzePattern(M);
      lu_->factorize(M);
      if (lu_->info() != Eigen::Success) throw SchemeFailure("CDE implicit matrix is singular");
    }
  }

  SliceLayout layout_;
  double hT_;
  SpMat A_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  std::vector<double> initial_;
  std::vector<char> pinned_;
  std::vector<double> pinned_value_;
  CdeReport report_;
};

double check_and_clip(double* v, std::size_t n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double excess = std::max(v[i] - 1.0, -v[i]);
    if (!std::isfinite(v[i]) || excess > 1e-9) {
      std::ostringstream os;
      os << "CDE value " << v[i] << " outside [0, 1]";
      throw SchemeFailure(os.str());
    }
    worst = std::max(worst, excess);
    v[i] = std::clamp(v[i], 0.0, 1.0);
  }
  return worst;
}

}  // namespace

SafeProbabilityField solve_cde(const ClosedLoop& loop, ProbabilityType ptype, const GridSpec& grid,
                               PolicyTag tag, const CdeOptions& opt, CdeReport* report) {
  const CdeStepper stepper(loop, ptype, grid, opt);
  SafeProbabilityField field;
  field.ptype = ptype;
  field.policy_tag = tag;
  field.provenance = Provenance::CDE;
  field.grid = grid;
  field.margin = loop.margin.ell0;
  const std::size_t S = stepper.slice_size();
  field.values.resize(grid.size());
  Eigen::VectorXd F = Eigen::Map<const Eigen::VectorXd>(stepper.initial().data(),
                                                        static_cast<Eigen::Index>(S));
  std::copy(stepper.initial().begin(), stepper.initial().end(), field.values.begin());
  double max_clip = 0.0;
  for (std::size_t k = 1; k < grid.T.nodes; ++k) {
    stepper.advance(F);
    max_clip = std::max(max_clip, check_and_clip(F.data(), S));
    std::copy(F.data(), F.data() + S, field.values.begin() + static_cast<long>(k * S));
  }
  if (report) {
    *report = stepper.report();
    report->max_clip = max_clip;
  }
  return field;
}

SafeProbabilityField smooth_mc_field(const SafeProbabilityField& raw, const ClosedLoop& loop,
                                     const SmoothingOptions& opt) {
  if (raw.values.size() != raw.grid.size())
    throw std::invalid_argument("raw field size does not match its grid");
  const CdeStepper stepper(loop, raw.ptype, raw.grid, opt.cde);
  const std::size_t S = stepper.slice_size();
  const std::size_t K = raw.grid.T.nodes;
  std::vector<double> cur(raw.values);
  for (double& v : cur) v = std::clamp(v, 0.0, 1.0);
  auto pin = [&](double* slice) {
    for (std::size_t p = 0; p < S; ++p)
      if (stepper.pinned()[p]) slice[p] = stepper.pinned_value()[p];
  };
  std::copy(stepper.initial().begin(), stepper.initial().end(), cur.begin());
  for (std::size_t k = 1; k < K; ++k) pin(cur.data() + k * S);

  std::vector<double> next(cur.size());
  for (std::size_t sweep = 0; sweep < opt.sweeps; ++sweep) {
    std::copy(cur.begin(), cur.begin() + static_cast<long>(S), next.begin());
    for (std::size_t k = 1; k < K; ++k) {
      Eigen::VectorXd F =
          Eigen::Map<const Eigen::VectorXd>(cur.data() + (k - 1) * S, static_cast<Eigen::Index>(S));
      stepper.advance(F);
      const double* r = raw.values.data() + k * S;
      double* out = next.data() + k * S;
      for (std::size_t p = 0; p < S; ++p) {
        const double v = r[p] + opt.weight * (F[static_cast<Eigen::Index>(p)] - r[p]);
        out[p] = std::clamp(std::clamp(v, r[p] - opt.max_deviation, r[p] + opt.max_deviation),
                            0.0, 1.0);
      }
      pin(out);
    }
    cur.swap(next);
  }
  SafeProbabilityField out = raw;
  out.values = std::move(cur);
  out.provenance = Provenance::MCSmoothed;
  return out;
}

SafeProbabilityField mc_field(const ClosedLoop& loop, ProbabilityType ptype, const GridSpec& grid,
                              const EnsembleOptions& opt, PolicyTag tag) {
  grid.validate();
  const SliceLayout layout(grid);
  const std::size_t nx = layout.n_x;
  if (static_cast<std::size_t>(loop.system.dim_state()) != nx)
    throw std::invalid_argument("MC grid needs one x axis per state dimension");
  SafeProbabilityField field;
  field.ptype = ptype;
  field.policy_tag = tag;
  field.provenance = Provenance::MC;
  field.grid = grid;
  field.margin = loop.margin.ell0;
  field.values.resize(grid.size());
  field.std_error.resize(grid.size());
  std::vector<std::uint32_t> steps(grid.T.nodes);
  for (std::size_t k = 0; k < grid.T.nodes; ++k) steps[k] = step_count(grid.T.coord(k), opt.dt);

  Vec x(static_cast<Eigen::Index>(nx));
  for (std::size_t p = 0; p < layout.size; ++p) {
    for (std::size_t d = 0; d < nx; ++d)
      x[static_cast<Eigen::Index>(d)] = layout.axes[d].coord(layout.index_along(p, d));
    const double L =
        layout.has_L ? layout.axes[nx].coord(layout.index_along(p, nx)) : loop.margin.ell0;
    const PathStats st = ensemble_path_stats(loop, x, L, grid.T.max, opt);
    for (std::size_t k = 0; k < grid.T.nodes; ++k) {
      std::uint64_t hits = 0;
      for (std::size_t i = 0; i < st.size(); ++i)
        hits += event_holds_until(ptype, st, i, steps[k]) ? 1 : 0;
      const MCEstimate e = make_estimate(hits, st.size(), opt.seed);
      field.values[k * layout.size + p] = e.value;
      field.std_error[k * layout.size + p] = e.std_error;
    }
  }
  return field;
}

// ---------------------------------------------------------------- queries

namespace {

struct NodeAccess {
  const std::vector<double>& v;
  const std::vector<std::size_t>& strides;
  const std::vector<std::size_t>& shape;
  const std::vector<double>& h;

  std::size_t idx(std::size_t flat, std::size_t d) const { return (flat / strides[d]) % shape[d]; }

  template <class Fn>
  double d1(std::size_t flat, std::size_t d, Fn&& f) const {
    const std::size_t i = idx(flat, d), n = shape[d], s = strides[d];
    if (i > 0 && i + 1 < n) return (f(flat + s) - f(flat - s)) / (2.0 * h[d]);
    if (i == 0) return (-3.0 * f(flat) + 4.0 * f(flat + s) - f(flat + 2 * s)) / (2.0 * h[d]);
    return (3.0 * f(flat) - 4.0 * f(flat - s) + f(flat - 2 * s)) / (2.0 * h[d]);
  }

  double d2(std::size_t flat, std::size_t d) const {
    const std::size_t i = idx(flat, d), n = shape[d], s = strides[d];
    const double hh = h[d] * h[d];
    if (i > 0 && i + 1 < n) return (v[flat + s] - 2.0 * v[flat] + v[flat - s]) / hh;
    if (n >= 4) {
      if (i == 0)
        return (2.0 * v[flat] - 5.0 * v[flat + s] + 4.0 * v[flat + 2 * s] - v[flat + 3 * s]) / hh;
      return (2.0 * v[flat] - 5.0 * v[flat - s] + 4.0 * v[flat - 2 * s] - v[flat - 3 * s]) / hh;
    }
    const std::size_t c = i == 0 ? flat + s : flat - s;
    return (v[c + s] - 2.0 * v[c] + v[c - s]) / hh;
  }
};

}  // namespace

FieldSample field_sample(const SafeProbabilityField& field, const AugmentedState& z) {
  const GridSpec& g = field.grid;
  const std::size_t D = g.dims();
  const std::size_t nx = g.x.size();
  if (static_cast<std::size_t>(z.x.size()) != nx)
    throw std::invalid_argument("field query state has wrong dimension");
  const auto shape = g.shape();
  const auto strides = g.strides();
  std::vector<double> h(D);
  std::vector<std::size_t> cell(D);
  std::vector<double> frac(D);
  // Grid axis d -> augmented coordinate.
  std::vector<int> zmap(D);
  FieldSample out;
  for (std::size_t d = 0; d < D; ++d) {
    const Axis& a = g.axis(d);
    double q;
    if (d == 0) {
      q = z.T;
      zmap[d] = kZT;
    } else if (d <= nx) {
      q = z.x[static_cast<Eigen::Index>(d - 1)];
      zmap[d] = kZX + static_cast<int>(d - 1);
    } else {
      q = z.L;
      zmap[d] = kZL;
    }
    if (q < a.min || q > a.max || !std::isfinite(q)) out.out_of_domain = true;
    if (!std::isfinite(q)) q = a.min;
    q = std::clamp(q, a.min, a.max);
    h[d] = a.spacing();
    const double r = (q - a.min) / h[d];
    const auto i0 = std::min(static_cast<std::size_t>(r), a.nodes - 2);
    cell[d] = i0;
    frac[d] = std::clamp(r - static_cast<double>(i0), 0.0, 1.0);
  }
  const NodeAccess acc{field.values, strides, shape, h};
  auto val = [&](std::size_t f) { return field.values[f]; };

  double value = 0.0;
  Vec grad = Vec::Zero(static_cast<Eigen::Index>(D));
  Mat hess = Mat::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
  for (std::size_t corner = 0; corner < (std::size_t{1} << D); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t d = 0; d < D; ++d) {
      const bool hi = (corner >> d) & 1u;
      w *= hi ? frac[d] : 1.0 - frac[d];
      flat += (cell[d] + (hi ? 1 : 0)) * strides[d];
    }
    if (w == 0.0) continue;
    value += w * field.values[flat];
    for (std::size_t d = 0; d < D; ++d) {
      const auto di = static_cast<Eigen::Index>(d);
      grad[di] += w * acc.d1(flat, d, val);
      hess(di, di) += w * acc.d2(flat, d);
      for (std::size_t e = d + 1; e < D; ++e) {
        const double m = acc.d1(flat, d, [&](std::size_t f) { return acc.d1(f, e, val); });
        hess(di, static_cast<Eigen::Index>(e)) += w * m;
        hess(static_cast<Eigen::Index>(e), di) += w * m;
      }
    }
  }

  const auto Z = static_cast<Eigen::Index>(nx + 3);
  out.value = value;
  out.gradient = Vec::Zero(Z);
  out.hessian = Mat::Zero(Z, Z);
  for (std::size_t d = 0; d < D; ++d) {
    out.gradient[zmap[d]] = grad[static_cast<Eigen::Index>(d)];
    for (std::size_t e = 0; e < D; ++e)
      out.hessian(zmap[d], zmap[e]) = hess(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(e));
  }
  return out;
}

double field_value(const SafeProbabilityField& field, const AugmentedState& z,
                   bool* out_of_domain) {
  const FieldSample s = field_sample(field, z);
  if (out_of_domain) *out_of_domain = s.out_of_domain;
  return s.value;
}

Vec field_gradient(const SafeProbabilityField& field, const AugmentedState& z) {
  return field_sample(field, z).gradient;
}

Mat field_hessian(const SafeProbabilityField& field, const AugmentedState& z) {
  return field_sample(field, z).hessian;
}

GeneratorParts generator_parts(const SafeProbabilityField& field, const AugmentedDynamics& dyn,
                               const AugmentedState& z) {
  const FieldSample s = field_sample(field, z);
  const Vec zs = z.stacked();
  const Mat sig = dyn.sigma(zs);
  GeneratorParts p;
  p.F = s.value;
  p.drift = dyn.f(zs).dot(s.gradient);
  p.gain = dyn.g(zs).transpose() * s.gradient;
  p.diffusion = 0.5 * (sig * sig.transpose() * s.hessian).trace();
  p.out_of_domain = s.out_of_domain;
  return p;
}

double generator_value(const SafeProbabilityField& field, const AugmentedDynamics& dyn,
                       const AugmentedState& z, const Vec& u) {
  return generator_parts(field, dyn, z).value(u);
}

}  // namespace probsafe
