#include "probsafe/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace probsafe {

bool operator==(const FieldConfig& a, const FieldConfig& b) {
  return a.source == b.source && a.evaluation == b.evaluation && a.ptype == b.ptype &&
         a.grid == b.grid && a.scheme == b.scheme && a.dT == b.dT &&
         a.implicit_substeps == b.implicit_substeps && a.mc_dt == b.mc_dt &&
         a.mc_samples == b.mc_samples && a.picard_iterations == b.picard_iterations &&
         a.smoothing.sweeps == b.smoothing.sweeps && a.smoothing.weight == b.smoothing.weight &&
         a.smoothing.max_deviation == b.smoothing.max_deviation && a.file == b.file &&
         a.compute_if_missing == b.compute_if_missing;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.name == b.name && a.seed == b.seed && a.system == b.system &&
         a.barrier_c == b.barrier_c && a.barrier_d == b.barrier_d && a.K == b.K &&
         a.k0 == b.k0 && a.horizon.mode == b.horizon.mode && a.horizon.H == b.horizon.H &&
         a.ell0 == b.ell0 && a.margin_slope == b.margin_slope &&
         a.margin_offset == b.margin_offset && a.controller == b.controller && a.x0 == b.x0 &&
         a.dt == b.dt && a.t_end == b.t_end && a.n_trajectories == b.n_trajectories &&
         a.mc_samples == b.mc_samples && a.threads == b.threads &&
         a.max_fallback_rate == b.max_fallback_rate && a.field == b.field;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.name = "worst_case_proposed";
  c.system.A = Mat::Constant(1, 1, 2.0);
  c.system.a0 = Vec::Zero(1);
  c.system.B = Mat::Constant(1, 1, 1.0);
  c.system.S = Mat::Constant(1, 1, 2.0);
  c.barrier_c = Vec::Constant(1, 1.0);
  c.barrier_d = -1.0;
  c.K = Mat::Constant(1, 1, 2.5);
  c.k0 = Vec::Zero(1);
  c.horizon = {HorizonMode::Fixed, 10.0};
  c.x0 = Vec::Constant(1, 3.0);
  // The nominal closed loop only becomes likely to stay safe for ten seconds
  // far from the boundary, so the x axis reaches well beyond the rollouts.
  // A node sits just below x = 1: the absorbing boundary then does not move
  // with the spacing. Spacing 0.125 keeps upwind smearing of the strong
  // far-field drift within the probe tolerance.
  c.field.grid.T = {0.0, 10.0, 101};
  c.field.grid.x = {{-0.001, 999.999, 8001}};
  c.field.implicit_substeps = 100;
  return c;
}

namespace {

std::string_view mode_name(HorizonMode m) { return m == HorizonMode::Fixed ? "fixed" : "receding"; }
std::string_view scheme_name(TimeScheme s) {
  switch (s) {
    case TimeScheme::Auto: return "auto";
    case TimeScheme::Explicit: return "explicit";
    case TimeScheme::Implicit: return "implicit";
  }
  return "?";
}
std::string_view enforcement_name(Enforcement e) {
  return e == Enforcement::Projection ? "projection" : "equality";
}

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const toml::table& t, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> ok(allowed);
  for (const auto& [k, v] : t) {
    (void)v;
    if (!ok.count(k.str())) fail("unknown key '" + std::string(k.str()) + "' in " + where);
  }
}

const toml::table* sub(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) fail("'" + std::string(key) + "' must be a table");
  return n->as_table();
}

double num(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) return *v;
  fail("'" + key + "' must be a number");
}

void get(const toml::table* t, std::string_view key, double& out) {
  if (!t) return;
  if (const toml::node* n = t->get(key)) out = num(*n, std::string(key));
}

template <class Int>
void get_int(const toml::table* t, std::string_view key, Int& out) {
  if (!t) return;
  if (const toml::node* n = t->get(key)) {
    auto v = n->value<std::int64_t>();
    if (!v || *v < 0) fail("'" + std::string(key) + "' must be a non-negative integer");
    out = static_cast<Int>(*v);
  }
}

void get_str(const toml::table* t, std::string_view key, std::string& out) {
  if (!t) return;
  if (const toml::node* n = t->get(key)) {
    auto v = n->value<std::string>();
    if (!v) fail("'" + std::string(key) + "' must be a string");
    out = *v;
  }
}

Vec to_vec(const toml::node& n, const std::string& key) {
  if (n.is_number()) return Vec::Constant(1, num(n, key));
  const toml::array* a = n.as_array();
  if (!a) fail("'" + key + "' must be a number or an array of numbers");
  Vec v(static_cast<Eigen::Index>(a->size()));
  for (std::size_t i = 0; i < a->size(); ++i) v[static_cast<Eigen::Index>(i)] = num((*a)[i], key);
  return v;
}

Mat to_mat(const toml::node& n, const std::string& key) {
  if (n.is_number()) return Mat::Constant(1, 1, num(n, key));
  const toml::array* rows = n.as_array();
  if (!rows || rows->empty()) fail("'" + key + "' must be a number or an array of rows");
  Mat m;
  for (std::size_t r = 0; r < rows->size(); ++r) {
    const Vec row = to_vec((*rows)[r], key);
    if (r == 0) m.resize(static_cast<Eigen::Index>(rows->size()), row.size());
    if (row.size() != m.cols()) fail("'" + key + "' has rows of unequal length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

void get_vec(const toml::table* t, std::string_view key, Vec& out) {
  if (!t) return;
  if (const toml::node* n = t->get(key)) out = to_vec(*n, std::string(key));
}

void get_mat(const toml::table* t, std::string_view key, Mat& out) {
  if (!t) return;
  if (const toml::node* n = t->get(key)) out = to_mat(*n, std::string(key));
}

template <class Fn>
auto parse_enum(const toml::table* t, std::string_view key, Fn&& parse, decltype(parse("")) def) {
  std::string s;
  get_str(t, key, s);
  if (s.empty()) return def;
  try {
    return parse(s);
  } catch (const std::invalid_argument& e) {
    fail(std::string(key) + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  // Shortest text that parses back to the same double.
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string fmt_vec(const Vec& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::string fmt_mat(const Mat& m) {
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    s += (r ? ", " : "") + fmt_vec(m.row(r).transpose());
  return s + "]";
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string controller_label(const ControllerConfig& c) {
  if (!c.label.empty()) return c.label;
  switch (c.kind) {
    case PolicyKind::Additive:
    case PolicyKind::ConstrainedOpt:
    case PolicyKind::WorstCaseEquality:
    case PolicyKind::Switching: return "proposed";
    default: return std::string(to_string(c.kind));
  }
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
    fail(os.str());
  }
  check_keys(root, "top level",
             {"name", "seed", "system", "barrier", "nominal", "horizon", "margin", "controller",
              "simulation", "field"});
  ExperimentConfig c = default_config();
  get_str(&root, "name", c.name);
  get_int(&root, "seed", c.seed);

  if (const auto* t = sub(root, "system")) {
    check_keys(*t, "[system]", {"A", "a0", "B", "sigma"});
    get_mat(t, "A", c.system.A);
    get_vec(t, "a0", c.system.a0);
    get_mat(t, "B", c.system.B);
    get_mat(t, "sigma", c.system.S);
    if (!t->get("a0")) c.system.a0 = Vec::Zero(c.system.A.rows());
  }
  if (const auto* t = sub(root, "barrier")) {
    check_keys(*t, "[barrier]", {"c", "d"});
    get_vec(t, "c", c.barrier_c);
    get(t, "d", c.barrier_d);
  }
  if (const auto* t = sub(root, "nominal")) {
    check_keys(*t, "[nominal]", {"K", "k0"});
    get_mat(t, "K", c.K);
    get_vec(t, "k0", c.k0);
    if (!t->get("k0")) c.k0 = Vec::Zero(c.K.rows());
  }
  if (const auto* t = sub(root, "horizon")) {
    check_keys(*t, "[horizon]", {"mode", "H"});
    c.horizon.mode = parse_enum(
        t, "mode",
        [](std::string_view s) {
          if (s == "fixed") return HorizonMode::Fixed;
          if (s == "receding") return HorizonMode::Receding;
          throw std::invalid_argument("expected 'fixed' or 'receding'");
        },
        c.horizon.mode);
    get(t, "H", c.horizon.H);
  }
  if (const auto* t = sub(root, "margin")) {
    check_keys(*t, "[margin]", {"ell0", "slope", "offset"});
    get(t, "ell0", c.ell0);
    get(t, "slope", c.margin_slope);
    get(t, "offset", c.margin_offset);
  }
  if (const auto* t = sub(root, "controller")) {
    check_keys(*t, "[controller]",
               {"kind", "enforcement", "switching_inner", "label", "alpha", "epsilon", "eta",
                "gamma", "beta", "min_gain_norm", "J_weight"});
    auto& k = c.controller;
    k.kind = parse_enum(t, "kind", parse_policy_kind, k.kind);
    k.enforcement = parse_enum(
        t, "enforcement",
        [](std::string_view s) {
          if (s == "projection") return Enforcement::Projection;
          if (s == "equality") return Enforcement::Equality;
          throw std::invalid_argument("expected 'projection' or 'equality'");
        },
        k.enforcement);
    k.switching_inner = parse_enum(t, "switching_inner", parse_policy_kind, k.switching_inner);
    get_str(t, "label", k.label);
    get(t, "alpha", k.alpha);
    get(t, "epsilon", k.epsilon);
    get(t, "eta", k.eta);
    get(t, "gamma", k.gamma);
    get(t, "beta", k.beta);
    get(t, "min_gain_norm", k.min_gain_norm);
    get_mat(t, "J_weight", k.J_weight);
  }
  if (const auto* t = sub(root, "simulation")) {
    check_keys(*t, "[simulation]",
               {"x0", "dt", "t_end", "n_trajectories", "mc_samples", "threads",
                "max_fallback_rate"});
    get_vec(t, "x0", c.x0);
    get(t, "dt", c.dt);
    get(t, "t_end", c.t_end);
    get_int(t, "n_trajectories", c.n_trajectories);
    get_int(t, "mc_samples", c.mc_samples);
    get_int(t, "threads", c.threads);
    get(t, "max_fallback_rate", c.max_fallback_rate);
  }
  if (const auto* t = sub(root, "field")) {
    check_keys(*t, "[field]",
               {"source", "evaluation", "ptype", "scheme", "dT", "implicit_substeps", "mc_dt",
                "mc_samples", "picard_iterations", "file", "on_missing", "grid", "smoothing"});
    auto& f = c.field;
    f.source = parse_enum(t, "source", parse_provenance, f.source);
    f.evaluation = parse_enum(t, "evaluation", parse_policy_tag, f.evaluation);
    f.ptype = parse_enum(t, "ptype", parse_probability_type, f.ptype);
    f.scheme = parse_enum(
        t, "scheme",
        [](std::string_view s) {
          if (s == "auto") return TimeScheme::Auto;
          if (s == "explicit") return TimeScheme::Explicit;
          if (s == "implicit") return TimeScheme::Implicit;
          throw std::invalid_argument("expected 'auto', 'explicit' or 'implicit'");
        },
        f.scheme);
    get(t, "dT", f.dT);
    get_int(t, "implicit_substeps", f.implicit_substeps);
    get(t, "mc_dt", f.mc_dt);
    get_int(t, "mc_samples", f.mc_samples);
    get_int(t, "picard_iterations", f.picard_iterations);
    get_str(t, "file", f.file);
    if (!f.file.empty() && !base_dir.empty() && std::filesystem::path(f.file).is_relative())
      f.file = (base_dir / f.file).lexically_normal().string();
    std::string on_missing = f.compute_if_missing ? "compute" : "fail";
    get_str(t, "on_missing", on_missing);
    if (on_missing != "compute" && on_missing != "fail")
      fail("field.on_missing must be 'compute' or 'fail'");
    f.compute_if_missing = on_missing == "compute";
    if (const auto* g = sub(*t, "grid")) {
      check_keys(*g, "[field.grid]",
                 {"T_max", "T_nodes", "x_min", "x_max", "x_nodes", "L_min", "L_max", "L_nodes"});
      get(g, "T_max", f.grid.T.max);
      get_int(g, "T_nodes", f.grid.T.nodes);
      Vec lo, hi, nodes;
      for (const auto& a : f.grid.x) {
        lo.conservativeResize(lo.size() + 1);
        hi.conservativeResize(hi.size() + 1);
        nodes.conservativeResize(nodes.size() + 1);
        lo[lo.size() - 1] = a.min;
        hi[hi.size() - 1] = a.max;
        nodes[nodes.size() - 1] = static_cast<double>(a.nodes);
      }
      get_vec(g, "x_min", lo);
      get_vec(g, "x_max", hi);
      get_vec(g, "x_nodes", nodes);
      if (lo.size() != hi.size() || lo.size() != nodes.size())
        fail("field.grid x_min, x_max and x_nodes must have equal length");
      f.grid.x.clear();
      for (Eigen::Index i = 0; i < lo.size(); ++i) {
        if (nodes[i] < 0 || nodes[i] != std::floor(nodes[i]))
          fail("field.grid.x_nodes must hold non-negative integers");
        f.grid.x.push_back({lo[i], hi[i], static_cast<std::size_t>(nodes[i])});
      }
      if (g->get("L_nodes") || g->get("L_min") || g->get("L_max")) {
        Axis L = f.grid.L.value_or(Axis{-1.0, 1.0, 21});
        get(g, "L_min", L.min);
        get(g, "L_max", L.max);
        get_int(g, "L_nodes", L.nodes);
        f.grid.L = L;
      }
    }
    if (const auto* s = sub(*t, "smoothing")) {
      check_keys(*s, "[field.smoothing]", {"sweeps", "weight", "max_deviation"});
      get_int(s, "sweeps", f.smoothing.sweeps);
      get(s, "weight", f.smoothing.weight);
      get(s, "max_deviation", f.smoothing.max_deviation);
    }
  }
  const toml::table* ft = sub(root, "field");
  const toml::table* gt = ft ? sub(*ft, "grid") : nullptr;
  if (!gt || !gt->get("T_max")) c.field.grid.T.max = c.horizon.H;
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  ExperimentConfig c;
  try {
    c = parse_config(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (const char* env = std::getenv("PROBSAFE_SEED")) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    // TOML integers are signed 64-bit, so larger seeds could not be written back.
    if (end == env || *end != '\0' || errno == ERANGE ||
        v > static_cast<unsigned long long>(std::numeric_limits<std::int64_t>::max()))
      throw ConfigError("PROBSAFE_SEED must be an integer in [0, 2^63 - 1]");
    c.seed = v;
  }
  return c;
}

void validate_config(const ExperimentConfig& c) {
  const auto n = c.system.A.rows();
  if (n < 1 || c.system.A.cols() != n) fail("system.A must be square");
  if (c.system.a0.size() != n) fail("system.a0 must have one entry per state");
  if (c.system.B.rows() != n || c.system.B.cols() < 1) fail("system.B must have n rows");
  if (c.system.S.rows() != n || c.system.S.cols() < 1) fail("system.sigma must have n rows");
  const auto m = c.system.B.cols();
  if (c.barrier_c.size() != n) fail("barrier.c must have one entry per state");
  if (c.K.rows() != m || c.K.cols() != n) fail("nominal.K must be m x n");
  if (c.k0.size() != m) fail("nominal.k0 must have m entries");
  if (c.x0.size() != n) fail("simulation.x0 must have n entries");
  if (!(c.horizon.H > 0.0)) fail("horizon.H must be positive");
  if (!(c.dt > 0.0)) fail("simulation.dt must be positive");
  if (!(c.t_end >= c.dt)) fail("simulation.t_end must be >= dt");
  if (c.horizon.mode == HorizonMode::Receding && c.t_end > c.horizon.H)
    fail("receding horizon needs t_end <= H");
  if (c.n_trajectories < 1) fail("simulation.n_trajectories must be >= 1");
  if (c.mc_samples < 1) fail("simulation.mc_samples must be >= 1");
  if (!(c.max_fallback_rate >= 0.0 && c.max_fallback_rate <= 1.0))
    fail("simulation.max_fallback_rate must lie in [0, 1]");
  const auto& k = c.controller;
  if (!(k.epsilon > 0.0 && k.epsilon < 1.0)) fail("controller.epsilon must lie in (0, 1)");
  if (!(k.alpha > 0.0)) fail("controller.alpha must be positive");
  if (!(k.eta > 0.0)) fail("controller.eta must be positive");
  if (!(k.gamma > 0.0 && k.gamma < 1.0)) fail("controller.gamma must lie in (0, 1)");
  if (!(k.beta > 0.0 && k.beta < 1.0)) fail("controller.beta must lie in (0, 1)");
  if (!(k.min_gain_norm >= 0.0)) fail("controller.min_gain_norm must be >= 0");
  if (k.J_weight.size() != 0 && (k.J_weight.rows() != m || k.J_weight.cols() != m))
    fail("controller.J_weight must be m x m");
  if (k.switching_inner == PolicyKind::Nominal || k.switching_inner == PolicyKind::Switching)
    fail("controller.switching_inner must be a safe policy");
  const auto& f = c.field;
  if (f.grid.x.size() != static_cast<std::size_t>(n)) fail("field.grid needs one x axis per state");
  try {
    f.grid.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("field.grid: ") + e.what());
  }
  const bool varying = c.margin_slope != 0.0 || c.margin_offset != 0.0;
  if (varying && !f.grid.L) fail("a varying margin needs field.grid L_min/L_max/L_nodes");
  if (f.grid.T.max + 1e-12 < c.horizon.H) fail("field.grid.T_max must cover horizon.H");
  if (!(f.mc_dt > 0.0)) fail("field.mc_dt must be positive");
  if (f.mc_samples < 1) fail("field.mc_samples must be >= 1");
  if (!(f.smoothing.weight >= 0.0 && f.smoothing.weight <= 1.0))
    fail("field.smoothing.weight must lie in [0, 1]");
  if (!(f.smoothing.max_deviation >= 0.0)) fail("field.smoothing.max_deviation must be >= 0");
  if (f.implicit_substeps < 1) fail("field.implicit_substeps must be >= 1");
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "name = " << quote(c.name) << "\n";
  os << "seed = " << c.seed << "\n\n";
  os << "[system]\n";
  os << "A = " << fmt_mat(c.system.A) << "\n";
  os << "a0 = " << fmt_vec(c.system.a0) << "\n";
  os << "B = " << fmt_mat(c.system.B) << "\n";
  os << "sigma = " << fmt_mat(c.system.S) << "\n\n";
  os << "[barrier]\n";
  os << "c = " << fmt_vec(c.barrier_c) << "\n";
  os << "d = " << fmt(c.barrier_d) << "\n\n";
  os << "[nominal]\n";
  os << "K = " << fmt_mat(c.K) << "\n";
  os << "k0 = " << fmt_vec(c.k0) << "\n\n";
  os << "[horizon]\n";
  os << "mode = " << quote(std::string(mode_name(c.horizon.mode))) << "\n";
  os << "H = " << fmt(c.horizon.H) << "\n\n";
  os << "[margin]\n";
  os << "ell0 = " << fmt(c.ell0) << "\n";
  os << "slope = " << fmt(c.margin_slope) << "\n";
  os << "offset = " << fmt(c.margin_offset) << "\n\n";
  const auto& k = c.controller;
  os << "[controller]\n";
  os << "kind = " << quote(std::string(to_string(k.kind))) << "\n";
  os << "enforcement = " << quote(std::string(enforcement_name(k.enforcement))) << "\n";
  os << "switching_inner = " << quote(std::string(to_string(k.switching_inner))) << "\n";
  os << "label = " << quote(k.label) << "\n";
  os << "alpha = " << fmt(k.alpha) << "\n";
  os << "epsilon = " << fmt(k.epsilon) << "\n";
  os << "eta = " << fmt(k.eta) << "\n";
  os << "gamma = " << fmt(k.gamma) << "\n";
  os << "beta = " << fmt(k.beta) << "\n";
  os << "min_gain_norm = " << fmt(k.min_gain_norm) << "\n";
  if (k.J_weight.size() != 0) os << "J_weight = " << fmt_mat(k.J_weight) << "\n";
  os << "\n[simulation]\n";
  os << "x0 = " << fmt_vec(c.x0) << "\n";
  os << "dt = " << fmt(c.dt) << "\n";
  os << "t_end = " << fmt(c.t_end) << "\n";
  os << "n_trajectories = " << c.n_trajectories << "\n";
  os << "mc_samples = " << c.mc_samples << "\n";
  os << "threads = " << c.threads << "\n";
  os << "max_fallback_rate = " << fmt(c.max_fallback_rate) << "\n\n";
  const auto& f = c.field;
  os << "[field]\n";
  os << "source = " << quote(std::string(to_string(f.source))) << "\n";
  os << "evaluation = " << quote(std::string(to_string(f.evaluation))) << "\n";
  os << "ptype = " << quote(std::string(to_string(f.ptype))) << "\n";
  os << "scheme = " << quote(std::string(scheme_name(f.scheme))) << "\n";
  os << "dT = " << fmt(f.dT) << "\n";
  os << "implicit_substeps = " << f.implicit_substeps << "\n";
  os << "mc_dt = " << fmt(f.mc_dt) << "\n";
  os << "mc_samples = " << f.mc_samples << "\n";
  os << "picard_iterations = " << f.picard_iterations << "\n";
  os << "file = " << quote(f.file) << "\n";
  os << "on_missing = " << quote(f.compute_if_missing ? "compute" : "fail") << "\n\n";
  os << "[field.grid]\n";
  os << "T_max = " << fmt(f.grid.T.max) << "\n";
  os << "T_nodes = " << f.grid.T.nodes << "\n";
  Vec lo(static_cast<Eigen::Index>(f.grid.x.size())), hi(lo.size());
  std::string nodes = "[";
  for (std::size_t i = 0; i < f.grid.x.size(); ++i) {
    lo[static_cast<Eigen::Index>(i)] = f.grid.x[i].min;
    hi[static_cast<Eigen::Index>(i)] = f.grid.x[i].max;
    nodes += (i ? ", " : "") + std::to_string(f.grid.x[i].nodes);
  }
  os << "x_min = " << fmt_vec(lo) << "\n";
  os << "x_max = " << fmt_vec(hi) << "\n";
  os << "x_nodes = " << nodes << "]\n";
  if (f.grid.L) {
    os << "L_min = " << fmt(f.grid.L->min) << "\n";
    os << "L_max = " << fmt(f.grid.L->max) << "\n";
    os << "L_nodes = " << f.grid.L->nodes << "\n";
  }
  os << "\n[field.smoothing]\n";
  os << "sweeps = " << f.smoothing.sweeps << "\n";
  os << "weight = " << fmt(f.smoothing.weight) << "\n";
  os << "max_deviation = " << fmt(f.smoothing.max_deviation) << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : serialize_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace probsafe
