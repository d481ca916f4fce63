#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoscale/schedule.hpp"
#include "twoscale/sde_core.hpp"
#include "twoscale/sv_example.hpp"

namespace twoscale {

/// Configuration problem anchored to a line and column of the input (1-based; 0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(what), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_, column_;
};

struct SystemSpec {
  bool preset = false;
  std::string preset_name;
  SVParams sv;
  std::string sigma_source = "1";
  std::string c_source = "y^2";

  // inline coefficients (row-major expression lists); empty b or g means zero
  std::size_t slow_dim = 1, fast_dim = 1, noise_dim = 1;
  std::map<std::string, double> constants;
  std::vector<std::string> b, c, sigma, f, g, tau1, tau2;
  std::vector<double> x0, y0;

  MultiscaleSystem build() const;
  std::vector<double> initial_slow() const;
  std::vector<double> initial_fast() const;
};

struct DtRule {
  enum class Kind { cap, fixed };
  Kind kind = Kind::cap;
  double c_step = kDefaultStepConstant;
  double value = 0.0;

  double step(double epsilon, double delta) const;
  std::string describe() const;
};

struct LlnSettings {
  std::size_t paths = 200;
};

struct CltSettings {
  std::optional<std::size_t> paths;  // falls back to the top-level path count
  std::optional<double> epsilon;     // defaults to the smallest configured epsilon
};

struct CovConvergenceSettings {
  std::size_t seeds = 3;
  std::optional<std::size_t> paths;
};

struct LimitOuSettings {
  std::size_t paths = 2000;
  double dt = 1e-3;
};

struct LdpSettings {
  double t = 1e-3;
  std::vector<double> nu{1.0, 1.5};
  std::size_t paths = 100000;
  double dt = 1e-2;
};

struct GridSettings {
  double lo = -6.0, hi = 6.0;
  std::size_t n_grid = 4001;
  double ode_dt = 1e-2;
};

inline const std::vector<std::string> kKnownChecks{"validate", "density", "corrector", "homogenize", "lln",
                                                   "clt",      "cov_convergence", "limit_ou", "ldp_tail"};

struct ExperimentConfig {
  std::string source_path;
  SystemSpec system;
  Regime regime = Regime::regime2;
  double gamma = 2.0;
  DeltaRule delta_rule{};
  double regime_threshold = kDefaultRegimeThreshold;
  std::vector<double> epsilons;
  double horizon = 1.0;
  DtRule dt{};
  FastScheme scheme = FastScheme::euler_maruyama;
  std::size_t paths = 1000;
  std::uint64_t seed = 1;
  std::string output = "out";
  std::vector<std::string> checks;
  GridSettings grid;
  LlnSettings lln;
  CltSettings clt;
  CovConvergenceSettings cov_convergence;
  LimitOuSettings limit_ou;
  LdpSettings ldp;

  ScaleSchedule schedule(double epsilon) const;
};

/// Parses YAML text; throws ConfigError with the offending node's position.
ExperimentConfig parse_config(const std::string& text, const std::string& source_name = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Overrides applied after parsing (CLI flags). --paths replaces every path count.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::string> output;
  std::optional<std::vector<std::string>> checks;
};
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o);

}  // namespace twoscale
