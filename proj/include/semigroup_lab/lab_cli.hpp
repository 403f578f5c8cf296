#pragma once

// Batch front end: declarative JSON experiment configs, task execution in
// dependency order, JSON + CSV reports.
//
// Exit codes: 0 no hard failures, 1 hard failure (or warnings under --strict),
// 2 config or usage error.

#include "semigroup_lab/coefficient_models.hpp"
#include "semigroup_lab/constants_lab.hpp"
#include "semigroup_lab/families.hpp"
#include "semigroup_lab/form_quadrature.hpp"
#include "semigroup_lab/semigroup_sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sglab::cli {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& task_order() {
  static const std::vector<std::string> order{"hypotheses", "intervals", "appendixB", "identity",
                                              "dissipativity", "analyticity", "weighted", "evolve"};
  return order;
}

/// Subcommand name -> task name.
inline std::optional<std::string> task_for_subcommand(const std::string& s) {
  static const std::map<std::string, std::string> m{
      {"check-hypotheses", "hypotheses"}, {"intervals", "intervals"},     {"identity", "identity"},
      {"dissipativity", "dissipativity"}, {"analyticity", "analyticity"}, {"weighted", "weighted"},
      {"appendix-b", "appendixB"},        {"evolve", "evolve"}};
  auto it = m.find(s);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

struct PotentialSpec {
  std::string kind = "zero";  // zero | constant | weight
  MatrixXd matrix;
  double v0 = 1.0;
  double beta = 1.0;
};

struct FieldSpec {
  std::string family;  // heat | case_I | case_II | diag_antisym
  int d = 2;
  int m = 2;
  double alpha = 0.0;
  std::uint64_t seed = 1;
  double k0 = 0.0, Lambda_G = 0.0;
  bool random_G = false;
  double k1 = 0.0, k2 = 0.0, k3 = 0.0;
  PotentialSpec potential;
};

struct PlanSpec {
  std::string kind = "grid";
  double lo = -2.0, hi = 2.0;
  int points = 9;  // per axis (grid) or total (random)
  std::uint64_t seed = 1;
};

struct WeightsSpec {
  double gamma = 0.0, C_gamma = 0.0, c1 = 1.0;
  std::optional<double> v0;  // defaults to the potential's v0
  std::optional<double> K_op;
};

struct TestFunctionSpec {
  int count = 10;
  bool complex_values = true;
  bool polynomial = false;
  double centers_lo = -0.5, centers_hi = 0.5;
  int terms_min = 1, terms_max = 3;
  double width_lo = 0.2, width_hi = 0.4;
};

struct EvolveSpec {
  int n = 64;
  double lo = -4.0, hi = 4.0;
  double dt = 1e-3;
  int steps = 200;
  std::string scheme = "implicit-euler";
  std::optional<std::vector<double>> p_list;
  double audit_tol = 1e-8;
  bool exploratory = false;
  double width = 0.3;
  double solver_tol = 1e-12;
  bool dump_operator = false;
};

struct Config {
  int schema_version = kSchemaVersion;
  std::string name;
  FieldSpec field;
  PlanSpec plan;
  std::optional<WeightsSpec> weights;
  std::optional<std::vector<double>> exponents;  // empty optional = auto
  std::vector<std::string> tasks;
  TestFunctionSpec test_functions;
  double h = 1.0 / 16;
  double delta = 0.0;
  std::string constants_source = "claimed";
  double margin_tol = 1e-6;
  double identity_tol = 1e-6;     // relative residual above this is a warning
  double identity_blowup = 1e-2;  // and above this (or nonfinite) a hard failure
  double cert_tol = 1e-10;
  EvolveSpec evolve;
  std::uint64_t seed = 1;
  std::string output = "semigroup-lab-out";
  json source;  // the parsed document, echoed into the report
};

namespace detail {

/// Object reader that rejects unknown keys up front.
class Obj {
 public:
  Obj(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
      if (!ok.count(k)) throw ConfigError("unknown key \"" + k + "\" in " + path_);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const {
    if (!j_.contains(key)) throw ConfigError("missing key \"" + std::string(key) + "\" in " + path_);
    return j_.at(key);
  }
  std::string where(const char* key) const { return path_ + "." + key; }

  template <class T>
  T req(const char* key) const {
    return convert<T>(at(key), where(key));
  }
  template <class T>
  T get(const char* key, T def) const {
    return has(key) ? convert<T>(j_.at(key), where(key)) : def;
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where + " must be a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
            throw ConfigError(where + " must be nonnegative");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where + " must be true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where + " must be a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
};

inline std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be a list of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(Obj::convert<double>(x, where));
  return out;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline PotentialSpec parse_potential(const json& j, int m) {
  Obj o(j, "field.potential", {"kind", "matrix", "v0", "beta"});
  PotentialSpec p;
  p.kind = o.get<std::string>("kind", "zero");
  require(p.kind == "zero" || p.kind == "constant" || p.kind == "weight",
          "field.potential.kind must be zero, constant or weight");
  if (p.kind == "constant") {
    const json& rows = o.at("matrix");
    require(rows.is_array() && static_cast<int>(rows.size()) == m, "field.potential.matrix must have m rows");
    p.matrix.resize(m, m);
    for (int i = 0; i < m; ++i) {
      auto r = number_list(rows[i], "field.potential.matrix");
      require(static_cast<int>(r.size()) == m, "field.potential.matrix must be m x m");
      for (int k = 0; k < m; ++k) p.matrix(i, k) = r[k];
    }
  } else {
    require(!o.has("matrix"), "field.potential.matrix is only used with kind constant");
  }
  if (p.kind == "weight") {
    p.v0 = o.get("v0", 1.0);
    p.beta = o.get("beta", 1.0);
    require(p.v0 > 0 && p.beta >= 0, "field.potential needs v0 > 0 and beta >= 0");
  } else {
    require(!o.has("v0") && !o.has("beta"), "field.potential.v0/beta are only used with kind weight");
  }
  return p;
}

inline FieldSpec parse_field(const json& j) {
  Obj o(j, "field", {"family", "d", "m", "alpha", "seed", "k0", "Lambda_G", "random_G", "k1", "k2", "k3", "potential"});
  FieldSpec f;
  f.family = o.req<std::string>("family");
  if (f.family == "custom") throw ConfigError("field.family \"custom\" is only available through the library API");
  static const std::map<std::string, std::set<std::string>> params{{"heat", {}},
                                                                   {"case_I", {"k0"}},
                                                                   {"case_II", {"Lambda_G", "random_G"}},
                                                                   {"diag_antisym", {"k1", "k2", "k3"}}};
  auto it = params.find(f.family);
  if (it == params.end()) throw ConfigError("field.family must be heat, case_I, case_II or diag_antisym");
  for (const char* k : {"k0", "Lambda_G", "random_G", "k1", "k2", "k3"})
    if (o.has(k) && !it->second.count(k))
      throw ConfigError("field." + std::string(k) + " does not apply to family " + f.family);
  for (const auto& k : it->second)
    if (k != "random_G" && !o.has(k.c_str())) throw ConfigError("missing key \"" + k + "\" in field");
  f.d = o.get("d", 2);
  f.m = o.get("m", 2);
  require(f.d >= 1 && f.d <= 3 && f.m >= 1 && f.m <= 6, "field.d must be 1..3 and field.m 1..6");
  f.alpha = o.get("alpha", 0.0);
  require(f.alpha >= 0, "field.alpha must be nonnegative");
  f.seed = o.get<std::uint64_t>("seed", 1);
  f.k0 = o.get("k0", 0.0);
  f.Lambda_G = o.get("Lambda_G", 0.0);
  f.random_G = o.get("random_G", false);
  f.k1 = o.get("k1", 0.0);
  f.k2 = o.get("k2", 0.0);
  f.k3 = o.get("k3", 0.0);
  if (o.has("potential")) f.potential = parse_potential(o.at("potential"), f.m);
  return f;
}

}  // namespace detail

/// Validates a parsed document; throws ConfigError.
inline Config parse_config(const json& j) {
  using detail::Obj;
  using detail::require;
  Obj o(j, "config",
        {"schema_version", "name", "field", "sample_plan", "weights", "exponents", "tasks", "test_functions",
         "quadrature", "delta", "constants_source", "tolerances", "evolve", "seed", "output"});
  Config c;
  c.source = j;
  c.schema_version = o.req<int>("schema_version");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  c.name = o.get<std::string>("name", "");
  c.field = detail::parse_field(o.at("field"));

  if (o.has("sample_plan")) {
    Obj p(o.at("sample_plan"), "sample_plan", {"kind", "box", "points", "seed"});
    c.plan.kind = p.get<std::string>("kind", "grid");
    require(c.plan.kind == "grid" || c.plan.kind == "random", "sample_plan.kind must be grid or random");
    if (p.has("box")) {
      auto b = detail::number_list(p.at("box"), "sample_plan.box");
      require(b.size() == 2 && b[0] < b[1], "sample_plan.box must be [lo, hi] with lo < hi");
      c.plan.lo = b[0], c.plan.hi = b[1];
    }
    c.plan.points = p.get("points", c.plan.kind == "grid" ? 9 : 500);
    require(c.plan.points >= 1, "sample_plan.points must be positive");
    c.plan.seed = p.get<std::uint64_t>("seed", 1);
  }

  if (o.has("weights")) {
    Obj w(o.at("weights"), "weights", {"gamma", "C_gamma", "c1", "v0", "K_op"});
    WeightsSpec ws;
    ws.gamma = w.get("gamma", 0.0);
    ws.C_gamma = w.get("C_gamma", 0.0);
    ws.c1 = w.get("c1", 1.0);
    if (w.has("v0")) ws.v0 = w.req<double>("v0");
    if (w.has("K_op")) ws.K_op = w.req<double>("K_op");
    require(ws.gamma >= 0 && ws.C_gamma >= 0 && ws.c1 >= 0, "weights: gamma, C_gamma and c1 must be nonnegative");
    require(c.field.potential.kind == "weight", "weights require field.potential.kind = weight (V = v I)");
    c.weights = ws;
  }

  if (o.has("exponents")) {
    const json& e = o.at("exponents");
    if (e.is_string()) {
      require(e.get<std::string>() == "auto", "exponents must be \"auto\" or a list of numbers");
    } else {
      c.exponents = detail::number_list(e, "config.exponents");
      require(!c.exponents->empty(), "exponents list is empty");
      for (double p : *c.exponents) require(p > 1 && std::isfinite(p), "exponents must be finite and > 1");
    }
  }

  if (o.has("tasks")) {
    const json& t = o.at("tasks");
    require(t.is_array(), "tasks must be a list");
    for (const auto& x : t) {
      auto s = Obj::convert<std::string>(x, "config.tasks");
      require(std::find(task_order().begin(), task_order().end(), s) != task_order().end(),
              "unknown task \"" + s + "\"");
      c.tasks.push_back(s);
    }
  } else {
    c.tasks = task_order();
  }

  if (o.has("test_functions")) {
    Obj t(o.at("test_functions"), "test_functions",
          {"count", "complex", "polynomial", "centers", "terms_min", "terms_max", "width"});
    auto& s = c.test_functions;
    s.count = t.get("count", s.count);
    s.complex_values = t.get("complex", s.complex_values);
    s.polynomial = t.get("polynomial", s.polynomial);
    if (t.has("centers")) {
      auto b = detail::number_list(t.at("centers"), "test_functions.centers");
      require(b.size() == 2 && b[0] <= b[1], "test_functions.centers must be [lo, hi]");
      s.centers_lo = b[0], s.centers_hi = b[1];
    }
    s.terms_min = t.get("terms_min", s.terms_min);
    s.terms_max = t.get("terms_max", s.terms_max);
    if (t.has("width")) {
      auto b = detail::number_list(t.at("width"), "test_functions.width");
      require(b.size() == 2 && 0 < b[0] && b[0] <= b[1], "test_functions.width must be [lo, hi] with 0 < lo <= hi");
      s.width_lo = b[0], s.width_hi = b[1];
    }
    require(s.count >= 1 && s.terms_min >= 1 && s.terms_min <= s.terms_max, "test_functions: invalid counts");
  }

  if (o.has("quadrature")) {
    Obj q(o.at("quadrature"), "quadrature", {"h"});
    c.h = q.get("h", c.h);
    require(c.h > 0, "quadrature.h must be positive");
  }
  c.delta = o.get("delta", 0.0);
  require(c.delta >= 0 && c.delta < 1, "delta must lie in [0, 1)");
  c.constants_source = o.get<std::string>("constants_source", c.constants_source);
  require(c.constants_source == "claimed" || c.constants_source == "empirical",
          "constants_source must be claimed or empirical");
  if (o.has("tolerances")) {
    Obj t(o.at("tolerances"), "tolerances", {"margin", "identity", "identity_blowup", "certification"});
    c.margin_tol = t.get("margin", c.margin_tol);
    c.identity_tol = t.get("identity", c.identity_tol);
    c.identity_blowup = t.get("identity_blowup", c.identity_blowup);
    c.cert_tol = t.get("certification", c.cert_tol);
  }
  if (o.has("evolve")) {
    Obj e(o.at("evolve"), "evolve",
          {"n", "box", "dt", "steps", "scheme", "p_list", "audit_tol", "exploratory", "width", "solver_tol",
           "dump_operator"});
    auto& s = c.evolve;
    s.n = e.get("n", s.n);
    if (e.has("box")) {
      auto b = detail::number_list(e.at("box"), "evolve.box");
      require(b.size() == 2 && b[0] < b[1], "evolve.box must be [lo, hi] with lo < hi");
      s.lo = b[0], s.hi = b[1];
    }
    s.dt = e.get("dt", s.dt);
    s.steps = e.get("steps", s.steps);
    s.scheme = e.get<std::string>("scheme", s.scheme);
    require(s.scheme == "implicit-euler" || s.scheme == "crank-nicolson",
            "evolve.scheme must be implicit-euler or crank-nicolson");
    if (e.has("p_list")) s.p_list = detail::number_list(e.at("p_list"), "evolve.p_list");
    s.audit_tol = e.get("audit_tol", s.audit_tol);
    s.exploratory = e.get("exploratory", s.exploratory);
    s.width = e.get("width", s.width);
    s.solver_tol = e.get("solver_tol", s.solver_tol);
    s.dump_operator = e.get("dump_operator", s.dump_operator);
    require(s.n >= 3 && s.dt > 0 && s.steps >= 0 && s.width > 0, "evolve: need n >= 3, dt > 0, steps >= 0, width > 0");
    require(s.solver_tol < 1e-8, "evolve.solver_tol must be below 1e-8");
  }
  c.seed = o.get<std::uint64_t>("seed", 1);
  c.output = o.get<std::string>("output", c.output);

  for (const auto& t : c.tasks)
    if ((t == "weighted" || t == "appendixB") && !c.weights)
      throw ConfigError("task " + t + " requires a weights section");
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

inline families::Potential make_potential(const PotentialSpec& p) {
  if (p.kind == "constant") return families::Potential::constant(p.matrix);
  if (p.kind == "weight") return families::Potential::weight(p.v0, p.beta);
  return families::Potential::zero();
}

inline SamplePlan make_plan(const Config& c) {
  const Box b = Box::cube(c.field.d, c.plan.lo, c.plan.hi);
  return c.plan.kind == "grid" ? SamplePlan::grid(b, c.plan.points) : SamplePlan::random(b, c.plan.points, c.plan.seed);
}

inline CoefficientField make_field(const Config& c) {
  const auto& f = c.field;
  const auto pot = make_potential(f.potential);
  const SamplePlan spot = make_plan(c);
  if (f.family == "heat") return families::heat(f.d, f.m, pot);
  if (f.family == "case_I") return families::case_I(f.d, f.m, f.k0, f.alpha, f.seed, pot, spot);
  if (f.family == "case_II") return families::case_II(f.d, f.m, f.Lambda_G, f.random_G, f.alpha, f.seed, pot, spot);
  return families::diag_antisym(f.d, f.m, f.k1, f.k2, f.k3, f.alpha, f.seed, pot, spot);
}

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json jnum(double v) { return std::isfinite(v) ? json(v) : json(num(v)); }

inline json point_json(const std::optional<VectorXd>& x) {
  if (!x) return nullptr;
  json a = json::array();
  for (Eigen::Index i = 0; i < x->size(); ++i) a.push_back((*x)(i));
  return a;
}

inline json interval_json(const Interval& I) {
  json j;
  j["text"] = I.str();
  j["lo"] = jnum(I.lo.value);
  j["hi"] = jnum(I.hi.value);
  j["lo_closed"] = I.lo.closed;
  j["hi_closed"] = I.hi.closed;
  return j;
}

struct Summary {
  std::vector<double> xs;
  void add(double v) { xs.push_back(v); }
  json to_json() const {
    json j;
    j["count"] = xs.size();
    if (xs.empty()) return j;
    std::vector<double> s = xs;
    std::sort(s.begin(), s.end());
    j["min"] = jnum(s.front());
    const std::size_t n = s.size();
    j["median"] = jnum(n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]));
    j["max"] = jnum(s.back());
    return j;
  }
};

class Csv {
 public:
  explicit Csv(std::initializer_list<const char*> cols) {
    bool first = true;
    for (const char* c : cols) os_ << (first ? "" : ",") << c, first = false;
    os_ << "\n";
  }
  template <class... T>
  void row(const T&... vals) {
    bool first = true;
    ((os_ << (first ? "" : ",") << cell(vals), first = false), ...);
    os_ << "\n";
  }
  std::string str() const { return os_.str(); }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "true" : "false"; }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  std::ostringstream os_;
};

/// Independent deterministic stream per task.
inline std::mt19937_64 task_rng(std::uint64_t seed, const std::string& task) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(std::hash<std::string>{}(task) & 0xffffffffu)};
  return std::mt19937_64(seq);
}

}  // namespace detail

struct RunOptions {
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::optional<std::vector<std::string>> only_tasks;  // from a subcommand
};

struct RunResult {
  int exit_code = 0;
  json report;
  json timing;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents (sorted by name)
  int hard_failures = 0;
  int warnings = 0;
};

namespace detail {

struct TaskOutcome {
  std::string status = "ok";  // ok | warning | failed | skipped
  json body = json::object();
  std::vector<std::string> messages;
  void warn(const std::string& m) {
    if (status == "ok") status = "warning";
    messages.push_back(m);
  }
  void fail(const std::string& m) {
    status = "failed";
    messages.push_back(m);
  }
};

/// Shared state between tasks.
struct Context {
  const Config& cfg;
  std::uint64_t seed;
  CoefficientField field;
  SamplePlan plan;
  std::optional<HypothesisReport> hyp;
  std::optional<CVEstimate> cV;
  std::optional<KEstimate> K;
  std::optional<HypothesisReport> weight_cert;
  double c0 = 0, scriptC = 0;
  std::string c0_source, scriptC_source;
  json constants = json::object();
  std::map<std::string, std::string> files;
};

inline std::string join_exponents(const std::vector<double>& ps) {
  std::string s;
  for (double p : ps) s += (s.empty() ? "" : ", ") + num(p);
  return s;
}

/// Exponents for a task: the explicit list, or points inside the window.
inline std::vector<double> exponents_for(const Context& ctx, const Interval& window) {
  if (ctx.cfg.exponents) return *ctx.cfg.exponents;
  const double lo = std::max(window.lo.value, 1.0);
  if (window.hi.infinite) return {std::max(lo, 1.25), std::max(lo, 1.5), 2.0, 3.0, 4.0};
  const double hi = window.hi.value;
  std::vector<double> out;
  for (double t : {0.05, 0.25, 0.5, 0.75, 0.95}) out.push_back(lo + t * (hi - lo));
  if (window.contains(2.0)) out.push_back(2.0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<TestFunction> test_functions(const Context& ctx, const std::string& task, bool force_real) {
  auto rng = task_rng(ctx.seed, task);
  const auto& s = ctx.cfg.test_functions;
  MixtureSpec spec;
  spec.terms_min = s.terms_min;
  spec.terms_max = s.terms_max;
  spec.width_lo = s.width_lo;
  spec.width_hi = s.width_hi;
  spec.complex_values = s.complex_values && !force_real;
  spec.polynomial = s.polynomial;
  const Box centers = Box::cube(ctx.cfg.field.d, s.centers_lo, s.centers_hi);
  std::vector<TestFunction> out;
  for (int i = 0; i < s.count; ++i) out.push_back(random_mixture(rng, ctx.cfg.field.d, ctx.cfg.field.m, centers, spec));
  return out;
}

inline WeightData weight_data(const Context& ctx) {
  const auto& w = *ctx.cfg.weights;
  WeightData wd;
  wd.psi = default_log_weight();
  wd.v = make_potential(ctx.cfg.field.potential).weight_fn();
  wd.gamma = w.gamma;
  wd.C_gamma = w.C_gamma;
  wd.v0 = w.v0.value_or(ctx.cfg.field.potential.v0);
  wd.c1 = w.c1;
  wd.c_V = ctx.cV ? ctx.cV->cV : 0.0;
  return wd;
}

inline TaskOutcome task_hypotheses(Context& ctx) {
  TaskOutcome t;
  const auto rep = certify_hypotheses(ctx.field, ctx.plan, ctx.cfg.cert_tol);
  ctx.hyp = rep;
  ctx.cV = estimate_cV(ctx.field, ctx.plan);
  json conds = json::array();
  Csv csv({"group", "condition", "status", "value", "witness"});
  auto emit = [&](const HypothesisReport& r, const char* group) {
    for (const auto& c : r.conditions) {
      json jc;
      jc["name"] = c.name;
      jc["group"] = group;
      jc["status"] = status_name(c.status);
      jc["value"] = jnum(c.value);
      jc["witness"] = point_json(c.witness);
      if (!c.message.empty()) jc["message"] = c.message;
      conds.push_back(jc);
      std::string w;
      if (c.witness)
        for (Eigen::Index i = 0; i < c.witness->size(); ++i) w += (i ? " " : "") + num((*c.witness)(i));
      csv.row(std::string(group), c.name, std::string(status_name(c.status)), c.value, w);
      if (c.status == Status::Fail) t.fail(std::string(group) + " condition " + c.name + " fails: " + c.message);
    }
  };
  emit(rep, "structure");
  json constants = json::object();
  for (const auto& [k, v] : rep.constants) constants[k] = jnum(v);
  constants["c_V"] = jnum(ctx.cV->cV);
  constants["c_V_bounded"] = ctx.cV->bounded;
  if (ctx.cfg.weights) {
    const WeightData wd = weight_data(ctx);
    try {
      ctx.weight_cert = certify_potential_weight(ctx.field, wd, ctx.plan, ctx.cfg.cert_tol);
      emit(*ctx.weight_cert, "weight");
      for (const auto& [k, v] : ctx.weight_cert->constants) constants[k] = jnum(v);
    } catch (const PreconditionError& e) {
      t.fail(std::string("potential weight: ") + e.what());
    }
    try {
      ctx.K = estimate_K_logweight(ctx.field, wd.psi, ctx.plan);
      constants["K_logweight"] = jnum(ctx.K->K);
    } catch (const PreconditionError& e) {
      t.warn(std::string("log-weight constant: ") + e.what());
    }
  }
  t.body["sample_count"] = rep.sample_count;
  t.body["finite_difference"] = rep.finite_difference;
  t.body["conditions"] = conds;
  t.body["constants"] = constants;
  t.body["notes"] = rep.notes;
  ctx.files["conditions.csv"] = csv.str();
  return t;
}

/// Picks c0 and scriptC from the claims or the sampled values.
inline void settle_constants(Context& ctx) {
  const auto& claims = ctx.field.claims;
  const bool use_claims = ctx.cfg.constants_source == "claimed";
  const double c0_emp = ctx.hyp ? ctx.hyp->constant("c0").value_or(0.0) : 0.0;
  const double C_emp = ctx.hyp ? ctx.hyp->constant("scriptC").value_or(0.0) : 0.0;
  if (use_claims && claims.c0) {
    ctx.c0 = *claims.c0;
    ctx.c0_source = "claimed";
  } else {
    ctx.c0 = c0_emp;
    ctx.c0_source = "empirical";
  }
  if (use_claims && claims.scriptC) {
    ctx.scriptC = *claims.scriptC;
    ctx.scriptC_source = "claimed";
  } else {
    ctx.scriptC = C_emp;
    ctx.scriptC_source = "empirical";
  }
  auto& k = ctx.constants;
  k["family"] = claims.family;
  k["c0"] = jnum(ctx.c0);
  k["c0_source"] = ctx.c0_source;
  k["c0_empirical"] = jnum(c0_emp);
  k["scriptC"] = jnum(ctx.scriptC);
  k["scriptC_text"] = Real(ctx.scriptC).str();
  k["scriptC_source"] = ctx.scriptC_source;
  k["scriptC_claimed"] = claims.scriptC ? jnum(*claims.scriptC) : json(nullptr);
  if (claims.scriptC_alt) k["scriptC_claimed_alt"] = jnum(*claims.scriptC_alt);
  k["scriptC_empirical"] = jnum(C_emp);
  k["c_V"] = ctx.cV ? jnum(ctx.cV->cV) : json(nullptr);
  if (ctx.K) k["K_logweight"] = jnum(ctx.K->K);
  if (ctx.cfg.weights) {
    const WeightData wd = weight_data(ctx);
    k["v0"] = jnum(wd.v0);
    k["gamma"] = jnum(wd.gamma);
    k["C_gamma"] = jnum(wd.C_gamma);
    k["c1"] = jnum(wd.c1);
  }
}

inline ExponentReport intervals_of(const Context& ctx) {
  return dissipativity_intervals(Real(ctx.scriptC), Real(ctx.cfg.delta));
}

inline TaskOutcome task_intervals(Context& ctx) {
  TaskOutcome t;
  const ExponentReport r = intervals_of(ctx);
  t.body["scriptC"] = r.scriptC.str();
  t.body["delta"] = r.delta.str();
  t.body["J"] = interval_json(r.J);
  t.body["Jtilde"] = interval_json(r.Jtilde);
  t.body["J_delta"] = interval_json(r.J_delta);
  t.body["cond_p_window"] = interval_json(r.cond_p_window);
  t.body["domain_window"] = interval_json(r.domain_window);
  ctx.constants["J"] = r.J.str();
  ctx.constants["Jtilde"] = r.Jtilde.str();
  ctx.constants["cond_p_window"] = r.cond_p_window.str();
  ctx.constants["domain_window"] = r.domain_window.str();
  json per = json::array();
  const double C = std::max(ctx.scriptC, 1e-12);
  for (double p : exponents_for(ctx, r.domain_window)) {
    json e;
    e["p"] = p;
    e["in_J"] = r.J.contains(p);
    e["in_Jtilde"] = r.Jtilde.contains(p);
    e["max_delta"] = jnum(max_delta_for(Real(p), Real(ctx.scriptC)).delta);
    e["in_cond_p_window"] = r.cond_p_window.contains(p);
    e["in_domain_window"] = r.domain_window.contains(p);
    if (ctx.cfg.weights && C < 0.5 && dissipativity_intervals(Real::inexact(C)).domain_window.contains(p)) {
      const WeightData wd = weight_data(ctx);
      try {
        const auto tl = theta_lambda({p, C, ctx.c0, wd.gamma, wd.C_gamma, wd.v0});
        e["Theta"] = jnum(tl.Theta);
        e["Lambda_p"] = jnum(tl.Lambda);
        if (ctx.cfg.weights->K_op) {
          const auto mm = domain_norm_constants(wd.c1, *ctx.cfg.weights->K_op, wd.v0);
          e["M1"] = jnum(mm.M1);
          e["M2"] = jnum(mm.M2);
        }
      } catch (const PreconditionError& ex) {
        e["Lambda_p"] = nullptr;
        e["note"] = ex.what();
      }
    }
    per.push_back(e);
  }
  t.body["exponents"] = per;
  return t;
}

inline TaskOutcome task_appendixB(Context& ctx) {
  TaskOutcome t;
  const double C = std::max(ctx.scriptC, 1e-12);
  if (!(C < 0.5)) {
    t.status = "skipped";
    t.messages.push_back("scriptC must lie below 1/2 for the weighted constants");
    return t;
  }
  const Interval window = dissipativity_intervals(Real::inexact(C)).domain_window;
  const WeightData wd = weight_data(ctx);
  Csv csv({"p", "Theta", "Lambda_p", "sup_psi2", "eps_a", "eps_b", "eps_c", "eps_d", "psi1", "psi2"});
  json rows = json::array();
  std::vector<double> skipped;
  for (double p : exponents_for(ctx, window)) {
    if (!window.contains(p)) {
      skipped.push_back(p);
      continue;
    }
    const LambdaInputs in{p, C, ctx.c0, wd.gamma, wd.C_gamma, wd.v0};
    const auto tl = theta_lambda(in);
    const auto pr = appendixB_problem_for(in);
    const auto sol = appendixB_solve(pr);
    std::array<double, 4> e{};
    json eps = json::array();
    for (int i = 0; i < 4; ++i) {
      e[i] = sol.eps[i].value_or(1.0);
      eps.push_back(sol.eps[i] ? json(*sol.eps[i]) : json(nullptr));
    }
    const double psi1 = psi1_of(pr, p, e);
    json r;
    r["p"] = p;
    r["Theta"] = jnum(tl.Theta);
    r["Lambda_p"] = jnum(tl.Lambda);
    r["sup_psi2"] = jnum(sol.sup);
    r["eps_star"] = eps;
    r["psi1"] = jnum(psi1);
    r["psi2"] = jnum(sol.psi2_at_eps);
    rows.push_back(r);
    auto ev = [&](int i) { return sol.eps[i] ? num(*sol.eps[i]) : std::string(""); };
    csv.row(p, tl.Theta, tl.Lambda, sol.sup, ev(0), ev(1), ev(2), ev(3), psi1, sol.psi2_at_eps);
    if (!(tl.Lambda > 0)) t.warn("Lambda_p is not positive at p = " + num(p));
  }
  t.body["scriptC_used"] = C;
  t.body["rows"] = rows;
  t.body["skipped_exponents"] = skipped;
  ctx.files["appendix_b.csv"] = csv.str();
  return t;
}

inline QuadratureGrid grid_for(const Context& ctx, const TestFunction& u) {
  return QuadratureGrid::covering(u.support, ctx.cfg.h);
}

inline TaskOutcome task_identity(Context& ctx) {
  TaskOutcome t;
  Summary rel;
  Csv csv({"function", "p", "eps", "residual", "scale", "relative"});
  const auto us = test_functions(ctx, "identity", false);
  const auto ps = exponents_for(ctx, dissipativity_intervals(Real(ctx.scriptC)).Jtilde);
  for (std::size_t i = 0; i < us.size(); ++i) {
    const auto grid = grid_for(ctx, us[i]);
    const double eps = default_eps(us[i], grid);
    for (double p : ps) {
      const auto r = dissipation_identity_residual(ctx.field, us[i], p, eps, grid);
      const double rr = r.scale > 0 ? r.residual / r.scale : r.residual;
      rel.add(rr);
      csv.row(i, p, eps, r.residual, r.scale, rr);
      const std::string what = num(rr) + " (relative) for function " + std::to_string(i) + " at p = " + num(p);
      if (!(rr <= ctx.cfg.identity_blowup))
        t.fail("identity residual blowup " + what);
      else if (rr > ctx.cfg.identity_tol)
        t.warn("identity residual " + what);
    }
  }
  t.body["exponents"] = ps;
  t.body["relative_residual"] = rel.to_json();
  ctx.files["identity.csv"] = csv.str();
  return t;
}

inline TaskOutcome task_dissipativity(Context& ctx) {
  TaskOutcome t;
  const Interval Jt = dissipativity_intervals(Real(ctx.scriptC)).Jtilde;
  const auto ps = exponents_for(ctx, Jt);
  const auto us = test_functions(ctx, "dissipativity", false);
  Summary margins;
  Csv csv({"function", "p", "delta", "margin", "gradient_term", "scale"});
  std::vector<double> skipped;
  json worst = nullptr;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (double p : ps) {
    if (!Jt.contains(p)) {
      skipped.push_back(p);
      continue;
    }
    const double delta = max_delta_for(Real(p), Real(ctx.scriptC)).delta;
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto grid = grid_for(ctx, us[i]);
      const auto m = dissipativity_margin(ctx.field, us[i], p, default_eps(us[i], grid), delta, grid, ctx.scriptC);
      margins.add(m.margin);
      csv.row(i, p, delta, m.margin, m.gradient_term, m.scale);
      if (m.margin < worst_margin) {
        worst_margin = m.margin;
        worst = {{"function", i}, {"p", p}, {"delta", delta}, {"margin", m.margin}};
      }
    }
  }
  if (worst_margin < -ctx.cfg.margin_tol)
    t.warn("dissipativity margin " + num(worst_margin) + " below -" + num(ctx.cfg.margin_tol));
  t.body["Jtilde"] = Jt.str();
  t.body["margin"] = margins.to_json();
  t.body["worst"] = worst;
  t.body["skipped_exponents"] = skipped;
  ctx.files["dissipativity.csv"] = csv.str();
  return t;
}

inline TaskOutcome task_analyticity(Context& ctx) {
  TaskOutcome t;
  const Interval window = dissipativity_intervals(Real(ctx.scriptC)).cond_p_window;
  const auto ps = exponents_for(ctx, window);
  const auto us = test_functions(ctx, "analyticity", false);
  const double cV = ctx.cV ? ctx.cV->cV : 0.0;
  Summary ratios;
  Csv csv({"function", "p", "num", "den", "ratio", "C1", "budget"});
  std::vector<double> skipped;
  double sup = 0;
  for (double p : ps) {
    if (!window.contains(p)) {
      skipped.push_back(p);
      continue;
    }
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto grid = grid_for(ctx, us[i]);
      const auto r = analyticity_ratio(ctx.field, us[i], p, default_eps(us[i], grid), grid, ctx.c0, ctx.scriptC, cV);
      ratios.add(r.ratio);
      sup = std::max(sup, r.ratio);
      csv.row(i, p, r.num, r.den, r.ratio, r.C1, r.budget);
      if (r.num > r.budget * (1 + 1e-10) + 1e-12 * r.scale)
        t.warn("sector bound exceeded for function " + std::to_string(i) + " at p = " + num(p));
    }
  }
  t.body["cond_p_window"] = window.str();
  t.body["ratio"] = ratios.to_json();
  t.body["sup_ratio"] = jnum(sup);
  t.body["skipped_exponents"] = skipped;
  ctx.files["analyticity.csv"] = csv.str();
  return t;
}

inline TaskOutcome task_weighted(Context& ctx) {
  TaskOutcome t;
  const double C = std::max(ctx.scriptC, 1e-12);
  if (!(C < 0.5)) {
    t.fail("scriptC must lie below 1/2 for the weighted estimate");
    return t;
  }
  const Interval window = dissipativity_intervals(Real::inexact(C)).domain_window;
  const auto ps = exponents_for(ctx, window);
  const auto us = test_functions(ctx, "weighted", true);
  const WeightData wd = weight_data(ctx);
  Summary margins, kr;
  Csv csv({"function", "p", "lhs", "G", "B", "W", "combination", "margin", "identity_residual", "K_ratio"});
  std::vector<double> skipped;
  for (double p : ps) {
    if (!window.contains(p)) {
      skipped.push_back(p);
      continue;
    }
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto grid = grid_for(ctx, us[i]);
      const auto a = weighted_estimate_audit(ctx.field, wd, us[i], p, default_eps(us[i], grid), grid, ctx.c0, C);
      margins.add(a.margin);
      if (a.K_ratio) kr.add(*a.K_ratio);
      const auto& I = a.integrals;
      csv.row(i, p, I.lhs, I.G, I.B, I.W, a.combination, a.margin, a.identity_residual,
              a.K_ratio ? num(*a.K_ratio) : std::string(""));
      if (a.margin < -ctx.cfg.margin_tol * std::max(1.0, I.scale))
        t.warn("weighted lower bound violated by " + num(-a.margin) + " for function " + std::to_string(i) +
               " at p = " + num(p));
      if (!(a.identity_residual <= ctx.cfg.identity_tol * std::max(1.0, I.scale)))
        t.fail("weighted identity residual " + num(a.identity_residual) + " for function " + std::to_string(i));
    }
  }
  t.body["domain_window"] = window.str();
  t.body["margin"] = margins.to_json();
  t.body["K_ratio"] = kr.to_json();
  t.body["skipped_exponents"] = skipped;
  ctx.files["weighted.csv"] = csv.str();
  return t;
}

inline TaskOutcome task_evolve(Context& ctx) {
  TaskOutcome t;
  const auto& e = ctx.cfg.evolve;
  const int d = ctx.cfg.field.d, m = ctx.cfg.field.m;
  const SimGrid g = SimGrid::uniform(Box::cube(d, e.lo, e.hi), e.n);
  const auto op = assemble(ctx.field, g);
  if (op.coarse_cells > 0)
    t.messages.push_back("coefficients change by more than 20% per cell at " + std::to_string(op.coarse_cells) +
                         " cells; refine the grid");
  VectorXcd c(m);
  for (int i = 0; i < m; ++i) c(i) = 1.0 / (1.0 + i);
  const auto bump = gaussian_bump(c, VectorXd::Zero(d), VectorXd::Constant(d, e.width));
  check_truncation_margin(g, bump.support);
  const VectorXcd u0 = sample_initial(g, m, [&](const VectorXd& x) { return bump.value(x); });

  const Interval window = dissipativity_intervals(Real(ctx.scriptC)).cond_p_window;
  EvolutionConfig ec;
  ec.dt = e.dt;
  ec.steps = e.steps;
  ec.scheme = e.scheme == "implicit-euler" ? TimeScheme::ImplicitEuler : TimeScheme::CrankNicolson;
  ec.solver.tolerance = e.solver_tol;
  ec.p_list = e.p_list ? *e.p_list : exponents_for(ctx, window);
  ec.audit_tol = e.audit_tol;
  ec.exploratory = e.exploratory;
  const auto rep = evolve_and_audit(op, u0, ec, window);

  json viol = json::array();
  Csv vcsv({"step", "p", "magnitude"});
  for (const auto& v : rep.violations) {
    viol.push_back({{"step", v.step}, {"p", v.p}, {"magnitude", v.magnitude}});
    vcsv.row(v.step, v.p, v.magnitude);
  }
  if (!rep.violations.empty())
    t.warn(std::to_string(rep.violations.size()) + " contraction violations above audit_tol " + num(e.audit_tol) +
           " (largest " + num(rep.max_violation) + ")");
  json ps = json::array();
  for (std::size_t i = 0; i < rep.p_list.size(); ++i)
    ps.push_back({{"p", rep.p_list[i]},
                  {"inside_window", static_cast<bool>(rep.inside_window[i])},
                  {"initial", rep.norms[i].front()},
                  {"final", rep.norms[i].back()}});
  t.body["grid"] = {{"n", e.n}, {"box", {e.lo, e.hi}}, {"spacing", g.spacing(0)}, {"unknowns", op.size()}};
  t.body["scheme"] = scheme_name(ec.scheme);
  t.body["dt"] = e.dt;
  t.body["steps"] = e.steps;
  t.body["norms"] = ps;
  t.body["violations"] = viol;
  t.body["max_violation"] = jnum(rep.max_violation);
  t.body["analyticity_proxy"] = jnum(rep.analyticity_proxy);
  t.body["boundary_mass"] = jnum(rep.boundary_mass);
  t.body["max_solver_residual"] = jnum(rep.max_solver_residual);
  t.body["symmetry_defect"] = jnum(op.symmetry_defect());
  t.body["coarse_cells"] = op.coarse_cells;
  std::ostringstream norms;
  write_norms_csv(norms, rep);
  ctx.files["evolve_norms.csv"] = norms.str();
  ctx.files["evolve_violations.csv"] = vcsv.str();
  if (e.dump_operator) {
    std::ostringstream mm;
    write_matrix_market(mm, op);
    ctx.files["operator.mtx"] = mm.str();
  }
  return t;
}

}  // namespace detail

inline RunResult run(const Config& cfg, const RunOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  RunResult out;
  const auto t_start = clock::now();
  std::vector<std::string> wanted = opt.only_tasks ? *opt.only_tasks : cfg.tasks;
  for (const auto& t : wanted)
    if ((t == "weighted" || t == "appendixB") && !cfg.weights)
      throw ConfigError("task " + t + " requires a weights section");

  detail::Context ctx{cfg, opt.seed.value_or(cfg.seed), {}, {}};
  json tasks = json::object();
  json timing = json::object();
  auto record = [&](const std::string& name, detail::TaskOutcome t, double seconds) {
    json j;
    j["status"] = t.status;
    j["messages"] = t.messages;
    for (auto& [k, v] : t.body.items()) j[k] = v;
    tasks[name] = j;
    timing[name] = seconds;
    if (t.status == "failed") ++out.hard_failures;
    if (t.status == "warning") ++out.warnings;
  };

  bool field_ok = true;
  try {
    ctx.field = make_field(cfg);
    ctx.plan = make_plan(cfg);
  } catch (const std::exception& e) {
    detail::TaskOutcome t;
    t.fail(std::string("field construction failed: ") + e.what());
    record("field", t, 0.0);
    field_ok = false;
  }

  if (field_ok) {
    // hypotheses always run first: every other task depends on its constants
    std::vector<std::string> order;
    for (const auto& name : task_order())
      if (name == "hypotheses" || std::find(wanted.begin(), wanted.end(), name) != wanted.end()) order.push_back(name);
    for (const auto& name : order) {
      const auto t0 = clock::now();
      detail::TaskOutcome t;
      try {
        if (name == "hypotheses") {
          t = detail::task_hypotheses(ctx);
          detail::settle_constants(ctx);
        } else if (name == "intervals") {
          t = detail::task_intervals(ctx);
        } else if (name == "appendixB") {
          t = detail::task_appendixB(ctx);
        } else if (name == "identity") {
          t = detail::task_identity(ctx);
        } else if (name == "dissipativity") {
          t = detail::task_dissipativity(ctx);
        } else if (name == "analyticity") {
          t = detail::task_analyticity(ctx);
        } else if (name == "weighted") {
          t = detail::task_weighted(ctx);
        } else if (name == "evolve") {
          t = detail::task_evolve(ctx);
        }
      } catch (const std::exception& e) {
        t = {};
        t.fail(e.what());
        if (name == "hypotheses") detail::settle_constants(ctx);
      }
      record(name, std::move(t), std::chrono::duration<double>(clock::now() - t0).count());
    }
  }

  out.exit_code = out.hard_failures > 0 || (opt.strict && out.warnings > 0) ? 1 : 0;
  json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["tool"] = "semigroup-lab";
  rep["name"] = cfg.name;
  rep["seed"] = ctx.seed;
  rep["strict"] = opt.strict;
  rep["config"] = cfg.source;
  rep["constants"] = ctx.constants;
  rep["tasks"] = tasks;
  rep["summary"] = {{"hard_failures", out.hard_failures}, {"warnings", out.warnings}, {"exit_code", out.exit_code}};
  out.report = rep;
  timing["total"] = std::chrono::duration<double>(clock::now() - t_start).count();
  out.timing = timing;

  detail::Csv constants({"name", "value"});
  for (const auto& [k, v] : ctx.constants.items())
    constants.row(k, v.is_string() ? v.get<std::string>() : v.dump());
  ctx.files["constants.csv"] = constants.str();
  for (auto& [k, v] : ctx.files) out.files.emplace_back(k, v);
  return out;
}

/// Writes report.json, timing.json and the CSV tables into dir.
inline void write_outputs(const RunResult& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (fs::path(dir) / name).string());
    f << body;
  };
  put("report.json", r.report.dump(2) + "\n");
  put("timing.json", r.timing.dump(2) + "\n");
  for (const auto& [name, body] : r.files) put(name, body);
}

}  // namespace sglab::cli
