#include "twoscale/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "twoscale/expression.hpp"

namespace twoscale {

namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& msg) {
  const auto mark = node.Mark();
  if (mark.is_null()) throw ConfigError(msg);
  throw ConfigError(msg, static_cast<std::size_t>(mark.line) + 1, static_cast<std::size_t>(mark.column) + 1);
}

void allow_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& where) {
  if (!node.IsMap()) fail(node, where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& what) {
  if (!node.IsScalar()) fail(node, what + " must be a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, what + " has an invalid value '" + node.Scalar() + "'");
  }
}

double positive(const YAML::Node& node, const std::string& what) {
  const double v = scalar<double>(node, what);
  if (!(v > 0.0) || !std::isfinite(v)) fail(node, what + " must be positive");
  return v;
}

std::size_t count(const YAML::Node& node, const std::string& what) {
  const auto v = scalar<long long>(node, what);
  if (v <= 0) fail(node, what + " must be a positive integer");
  return static_cast<std::size_t>(v);
}

std::vector<double> reals(const YAML::Node& node, const std::string& what) {
  if (node.IsScalar()) return {scalar<double>(node, what)};
  if (!node.IsSequence() || node.size() == 0) fail(node, what + " must be a non-empty list of numbers");
  std::vector<double> out;
  for (const auto& e : node) out.push_back(scalar<double>(e, what));
  return out;
}

std::vector<std::string> expressions(const YAML::Node& node, const std::string& what) {
  std::vector<std::string> out;
  if (node.IsScalar()) {
    out.push_back(node.Scalar());
  } else if (node.IsSequence()) {
    for (const auto& e : node) out.push_back(scalar<std::string>(e, what));
  } else {
    fail(node, what + " must be an expression or a list of expressions");
  }
  return out;
}

Expression compile_at(const YAML::Node& node, const std::string& src, std::size_t m, std::size_t n,
                      const std::map<std::string, double>& constants, const std::string& what) {
  try {
    return Expression::compile(src, m, n, constants);
  } catch (const ExpressionError& e) {
    const auto mark = node.Mark();
    throw ConfigError(what + ": " + e.what(), static_cast<std::size_t>(mark.line) + 1,
                      static_cast<std::size_t>(mark.column) + 1 + e.column());
  }
}

VectorField expression_field(std::vector<Expression> exprs) {
  return [exprs = std::move(exprs)](std::span<const double> x, std::span<const double> y, std::span<double> out) {
    for (std::size_t i = 0; i < exprs.size(); ++i) out[i] = exprs[i].evaluate(x, y);
  };
}

VectorField compile_field(const std::vector<std::string>& src, std::size_t size, const SystemSpec& s,
                          const std::string& what) {
  if (src.size() != size) {
    std::ostringstream os;
    os << what << " needs " << size << " entries, got " << src.size();
    throw ConfigError(os.str());
  }
  std::vector<Expression> exprs;
  for (const auto& e : src) {
    try {
      exprs.push_back(Expression::compile(e, s.slow_dim, s.fast_dim, s.constants));
    } catch (const ExpressionError& err) {
      throw ConfigError(what + ": " + err.what());
    }
  }
  return expression_field(std::move(exprs));
}

void parse_system(const YAML::Node& node, SystemSpec& s) {
  if (!node) throw ConfigError("missing required key 'system'");
  if (!node.IsMap()) fail(node, "system must be a mapping");
  if (node["preset"]) {
    allow_keys(node, {"preset", "m", "rho", "gamma", "sigma", "c", "x0", "y0"}, "system");
    s.preset = true;
    s.preset_name = scalar<std::string>(node["preset"], "system.preset");
    if (s.preset_name != "sv-example") fail(node["preset"], "unknown system preset '" + s.preset_name + "'");
    if (node["m"]) s.sv.m = scalar<double>(node["m"], "system.m");
    if (node["rho"]) {
      s.sv.rho = scalar<double>(node["rho"], "system.rho");
      if (!(std::abs(s.sv.rho) <= 1.0)) fail(node["rho"], "system.rho must lie in [-1, 1]");
    }
    if (node["gamma"]) s.sv.gamma = positive(node["gamma"], "system.gamma");
    if (node["x0"]) s.sv.x0 = scalar<double>(node["x0"], "system.x0");
    if (node["y0"]) s.sv.y0 = scalar<double>(node["y0"], "system.y0");
    const std::map<std::string, double> constants{{"m", s.sv.m}, {"rho", s.sv.rho}};
    if (node["sigma"]) {
      s.sigma_source = scalar<std::string>(node["sigma"], "system.sigma");
      const auto e = compile_at(node["sigma"], s.sigma_source, 1, 1, constants, "system.sigma");
      if (e.depends_on_slow()) fail(node["sigma"], "system.sigma may depend on y only");
      s.sv.sigma_fn = [e](double y) {
        const double x = 0.0;
        return e.evaluate({&x, 1}, {&y, 1});
      };
    }
    if (node["c"]) {
      s.c_source = scalar<std::string>(node["c"], "system.c");
      const auto e = compile_at(node["c"], s.c_source, 1, 1, constants, "system.c");
      s.sv.c_fn = [e](double x, double y) { return e.evaluate({&x, 1}, {&y, 1}); };
      std::string compact;
      for (char ch : s.c_source) {
        if (ch != ' ') compact += ch;
      }
      s.sv.c_is_y2 = compact == "y^2" || compact == "y*y" || compact == "y1^2";
    }
    return;
  }

  allow_keys(node, {"slow_dim", "fast_dim", "noise_dim", "constants", "b", "c", "sigma", "f", "g", "tau1", "tau2", "x0", "y0"},
             "system");
  if (node["slow_dim"]) s.slow_dim = count(node["slow_dim"], "system.slow_dim");
  if (node["fast_dim"]) s.fast_dim = count(node["fast_dim"], "system.fast_dim");
  if (node["noise_dim"]) s.noise_dim = count(node["noise_dim"], "system.noise_dim");
  if (node["constants"]) {
    const auto& cn = node["constants"];
    if (!cn.IsMap()) fail(cn, "system.constants must be a mapping");
    for (const auto& kv : cn) s.constants[kv.first.as<std::string>()] = scalar<double>(kv.second, "constant");
  }
  struct Entry {
    const char* key;
    std::vector<std::string>* dst;
    std::size_t size;
    bool required;
  };
  const std::size_t m = s.slow_dim, n = s.fast_dim, k = s.noise_dim;
  const Entry entries[] = {{"b", &s.b, m, false},         {"c", &s.c, m, true},        {"sigma", &s.sigma, m * k, true},
                           {"f", &s.f, n, true},          {"g", &s.g, n, false},       {"tau1", &s.tau1, n * k, true},
                           {"tau2", &s.tau2, n * k, true}};
  for (const auto& e : entries) {
    const auto& v = node[e.key];
    if (!v) {
      if (e.required) fail(node, std::string("system.") + e.key + " is required");
      continue;
    }
    *e.dst = expressions(v, std::string("system.") + e.key);
    if (e.dst->size() != e.size) {
      std::ostringstream os;
      os << "system." << e.key << " needs " << e.size << " entries, got " << e.dst->size();
      fail(v, os.str());
    }
    for (std::size_t i = 0; i < e.dst->size(); ++i) {
      compile_at(v.IsSequence() ? v[i] : v, (*e.dst)[i], m, n, s.constants, std::string("system.") + e.key);
    }
  }
  s.x0 = node["x0"] ? reals(node["x0"], "system.x0") : std::vector<double>(m, 0.0);
  s.y0 = node["y0"] ? reals(node["y0"], "system.y0") : std::vector<double>(n, 0.0);
  if (s.x0.size() != m) fail(node["x0"], "system.x0 has the wrong dimension");
  if (s.y0.size() != n) fail(node["y0"], "system.y0 has the wrong dimension");
}

DeltaRule parse_delta_rule(const YAML::Node& node) {
  if (!node) return DeltaRule::ratio();
  if (node.IsScalar()) {
    const auto kind = node.Scalar();
    if (kind == "ratio") return DeltaRule::ratio();
    fail(node, "delta_rule must be 'ratio' or a mapping {kind: power, a: ..., p: ...}");
  }
  allow_keys(node, {"kind", "a", "p"}, "delta_rule");
  const auto kind = node["kind"] ? scalar<std::string>(node["kind"], "delta_rule.kind") : std::string("power");
  if (kind == "ratio") return DeltaRule::ratio();
  if (kind != "power") fail(node["kind"], "delta_rule.kind must be 'power' or 'ratio'");
  const double a = node["a"] ? positive(node["a"], "delta_rule.a") : 1.0;
  if (!node["p"]) fail(node, "delta_rule.p is required for a power rule");
  const double p = positive(node["p"], "delta_rule.p");
  return DeltaRule::power(a, p);
}

}  // namespace

MultiscaleSystem SystemSpec::build() const {
  if (preset) return build_sv(sv);
  MultiscaleSystem sys;
  sys.name = "inline";
  sys.slow_dim = slow_dim;
  sys.fast_dim = fast_dim;
  sys.noise_dim = noise_dim;
  const std::size_t m = slow_dim, n = fast_dim, k = noise_dim;
  if (!b.empty()) sys.b = compile_field(b, m, *this, "system.b");
  sys.c = compile_field(c, m, *this, "system.c");
  sys.sigma = compile_field(sigma, m * k, *this, "system.sigma");
  sys.f = compile_field(f, n, *this, "system.f");
  if (!g.empty()) sys.g = compile_field(g, n, *this, "system.g");
  sys.tau1 = compile_field(tau1, n * k, *this, "system.tau1");
  sys.tau2 = compile_field(tau2, n * k, *this, "system.tau2");
  return sys;
}

std::vector<double> SystemSpec::initial_slow() const { return preset ? std::vector<double>{sv.x0} : x0; }
std::vector<double> SystemSpec::initial_fast() const {
  return preset ? std::vector<double>{sv.initial_fast()} : y0;
}

double DtRule::step(double epsilon, double delta) const {
  return kind == Kind::fixed ? value : step_cap(epsilon, delta, c_step);
}

std::string DtRule::describe() const {
  std::ostringstream os;
  if (kind == Kind::fixed) {
    os << "fixed " << value;
  } else {
    os << "cap " << c_step << " * min(1, delta^2/eps)";
  }
  return os.str();
}

ScaleSchedule ExperimentConfig::schedule(double epsilon) const {
  return classify_schedule(epsilon, delta_rule, regime, gamma, regime_threshold);
}

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, static_cast<std::size_t>(e.mark.line) + 1, static_cast<std::size_t>(e.mark.column) + 1);
  }
  if (!root.IsMap()) throw ConfigError("configuration must be a mapping", 1, 1);
  allow_keys(root,
             {"system", "regime", "gamma", "delta_rule", "regime_threshold", "epsilons", "horizon", "dt", "scheme",
              "paths", "seed", "output", "checks", "grid", "lln", "clt", "cov_convergence", "limit_ou", "ldp_tail"},
             "configuration");

  ExperimentConfig cfg;
  cfg.source_path = source_name;
  parse_system(root["system"], cfg.system);

  if (const auto n = root["regime"]) {
    const auto r = scalar<int>(n, "regime");
    if (r != 1 && r != 2) fail(n, "regime must be 1 or 2");
    cfg.regime = r == 1 ? Regime::regime1 : Regime::regime2;
  }
  if (const auto n = root["gamma"]) {
    cfg.gamma = positive(n, "gamma");
  } else if (cfg.system.preset) {
    cfg.gamma = cfg.system.sv.gamma;
  }
  if (cfg.system.preset) cfg.system.sv.gamma = cfg.gamma;
  cfg.delta_rule = parse_delta_rule(root["delta_rule"]);
  if (const auto n = root["regime_threshold"]) cfg.regime_threshold = positive(n, "regime_threshold");

  const auto eps = root["epsilons"];
  if (!eps) throw ConfigError("missing required key 'epsilons'");
  cfg.epsilons = reals(eps, "epsilons");
  for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
    const auto& node = eps.IsSequence() ? eps[i] : eps;
    if (!(cfg.epsilons[i] > 0.0)) fail(node, "epsilons must be positive");
    if (i > 0 && !(cfg.epsilons[i] < cfg.epsilons[i - 1])) fail(node, "epsilons must be strictly decreasing");
  }
  for (double e : cfg.epsilons) {
    try {
      (void)cfg.schedule(e);
    } catch (const ScheduleError& err) {
      const auto& anchor = root["delta_rule"] ? root["delta_rule"] : (root["regime"] ? root["regime"] : eps);
      fail(anchor, std::string("regime/delta rule inconsistency: ") + err.what());
    }
  }

  if (const auto n = root["horizon"]) cfg.horizon = positive(n, "horizon");
  if (const auto n = root["dt"]) {
    allow_keys(n, {"rule", "c_step", "value"}, "dt");
    const auto rule = n["rule"] ? scalar<std::string>(n["rule"], "dt.rule") : std::string("cap");
    if (rule == "cap") {
      cfg.dt.kind = DtRule::Kind::cap;
      if (n["c_step"]) cfg.dt.c_step = positive(n["c_step"], "dt.c_step");
    } else if (rule == "fixed") {
      cfg.dt.kind = DtRule::Kind::fixed;
      if (!n["value"]) fail(n, "dt.value is required for a fixed step");
      cfg.dt.value = positive(n["value"], "dt.value");
    } else {
      fail(n["rule"], "dt.rule must be 'cap' or 'fixed'");
    }
  }
  if (const auto n = root["scheme"]) {
    try {
      cfg.scheme = fast_scheme_from_string(scalar<std::string>(n, "scheme"));
    } catch (const std::invalid_argument& e) {
      fail(n, e.what());
    }
  }
  if (const auto n = root["paths"]) cfg.paths = count(n, "paths");
  if (const auto n = root["seed"]) cfg.seed = scalar<std::uint64_t>(n, "seed");
  if (const auto n = root["output"]) cfg.output = scalar<std::string>(n, "output");

  if (const auto n = root["checks"]) {
    if (!n.IsSequence()) fail(n, "checks must be a list");
    for (const auto& c : n) {
      const auto name = scalar<std::string>(c, "check");
      if (std::find(kKnownChecks.begin(), kKnownChecks.end(), name) == kKnownChecks.end()) {
        fail(c, "unknown check '" + name + "'");
      }
      cfg.checks.push_back(name);
    }
  } else {
    cfg.checks = {"validate", "density", "homogenize"};
  }

  if (const auto n = root["grid"]) {
    allow_keys(n, {"lo", "hi", "n_grid", "ode_dt"}, "grid");
    if (n["lo"]) cfg.grid.lo = scalar<double>(n["lo"], "grid.lo");
    if (n["hi"]) cfg.grid.hi = scalar<double>(n["hi"], "grid.hi");
    if (!(cfg.grid.hi > cfg.grid.lo)) fail(n, "grid.hi must exceed grid.lo");
    if (n["n_grid"]) {
      cfg.grid.n_grid = count(n["n_grid"], "grid.n_grid");
      if (cfg.grid.n_grid < 11) fail(n["n_grid"], "grid.n_grid must be at least 11");
    }
    if (n["ode_dt"]) cfg.grid.ode_dt = positive(n["ode_dt"], "grid.ode_dt");
  } else if (cfg.system.preset) {
    cfg.grid.lo = cfg.system.sv.m - 6.0;
    cfg.grid.hi = cfg.system.sv.m + 6.0;
  }
  if (const auto n = root["lln"]) {
    allow_keys(n, {"paths"}, "lln");
    if (n["paths"]) cfg.lln.paths = count(n["paths"], "lln.paths");
  }
  if (const auto n = root["clt"]) {
    allow_keys(n, {"paths", "epsilon"}, "clt");
    if (n["paths"]) cfg.clt.paths = count(n["paths"], "clt.paths");
    if (n["epsilon"]) {
      cfg.clt.epsilon = positive(n["epsilon"], "clt.epsilon");
      try {
        (void)cfg.schedule(*cfg.clt.epsilon);
      } catch (const ScheduleError& err) {
        fail(n["epsilon"], std::string("regime/delta rule inconsistency: ") + err.what());
      }
    }
  }
  if (const auto n = root["cov_convergence"]) {
    allow_keys(n, {"seeds", "paths"}, "cov_convergence");
    if (n["seeds"]) cfg.cov_convergence.seeds = count(n["seeds"], "cov_convergence.seeds");
    if (n["paths"]) cfg.cov_convergence.paths = count(n["paths"], "cov_convergence.paths");
  }
  if (const auto n = root["limit_ou"]) {
    allow_keys(n, {"paths", "dt"}, "limit_ou");
    if (n["paths"]) cfg.limit_ou.paths = count(n["paths"], "limit_ou.paths");
    if (n["dt"]) cfg.limit_ou.dt = positive(n["dt"], "limit_ou.dt");
  }
  if (const auto n = root["ldp_tail"]) {
    allow_keys(n, {"t", "nu", "paths", "dt"}, "ldp_tail");
    if (n["t"]) {
      cfg.ldp.t = positive(n["t"], "ldp_tail.t");
      if (cfg.ldp.t > 1e-2) fail(n["t"], "ldp_tail.t must not exceed 1e-2");
    }
    if (n["nu"]) cfg.ldp.nu = reals(n["nu"], "ldp_tail.nu");
    if (n["paths"]) cfg.ldp.paths = count(n["paths"], "ldp_tail.paths");
    if (n["dt"]) cfg.ldp.dt = positive(n["dt"], "ldp_tail.dt");
  }

  // Build once so expression or shape problems surface as configuration errors.
  try {
    cfg.system.build().check_shape();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    fail(root["system"], e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.paths) {
    cfg.paths = *o.paths;
    cfg.lln.paths = *o.paths;
    cfg.clt.paths = *o.paths;
    cfg.cov_convergence.paths = *o.paths;
    cfg.limit_ou.paths = *o.paths;
    cfg.ldp.paths = *o.paths;
  }
  if (o.output) cfg.output = *o.output;
  if (o.checks) {
    for (const auto& c : *o.checks) {
      if (std::find(kKnownChecks.begin(), kKnownChecks.end(), c) == kKnownChecks.end()) {
        throw ConfigError("unknown check '" + c + "' given on the command line");
      }
    }
    cfg.checks = *o.checks;
  }
}

}  // namespace twoscale
