#include <doctest.h>

#include <string>

#include "twoscale/config.hpp"

using namespace twoscale;

namespace {

const char* kBase = R"(system:
  preset: sv-example
  m: 0.5
regime: 2
delta_rule: ratio
epsilons: [1.0e-1, 1.0e-2]
checks: [validate, homogenize]
)";

ConfigError error_of(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a configuration error");
  return ConfigError("");
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("preset config parses") {
    const auto cfg = parse_config(kBase);
    CHECK(cfg.system.preset);
    CHECK(cfg.regime == Regime::regime2);
    CHECK(cfg.gamma == 2.0);
    CHECK(cfg.epsilons.size() == 2);
    CHECK(cfg.checks == std::vector<std::string>{"validate", "homogenize"});
    CHECK(cfg.grid.lo == -5.5);
    CHECK(cfg.grid.hi == 6.5);
    const auto s = cfg.schedule(1e-2);
    CHECK(s.delta == doctest::Approx(5e-3));
  }

  TEST_CASE("increasing epsilon list is rejected with a line") {
    const auto e = error_of("system: {preset: sv-example}\ndelta_rule: ratio\nepsilons: [1.0e-3, 1.0e-2]\n");
    CHECK(std::string(e.what()).find("strictly decreasing") != std::string::npos);
    CHECK(e.line() == 3);
  }

  TEST_CASE("regime 1 with delta = eps^0.5 is inconsistent") {
    const auto e = error_of("system: {preset: sv-example}\nregime: 1\ndelta_rule: {kind: power, p: 0.5}\nepsilons: [1.0e-2]\n");
    CHECK(std::string(e.what()).find("regime/delta rule inconsistency") != std::string::npos);
    CHECK(e.line() == 3);
  }

  TEST_CASE("unknown keys, presets and checks") {
    CHECK(error_of(std::string(kBase) + "bogus: 1\n").line() == 8);
    CHECK(std::string(error_of("system: {preset: nope}\nepsilons: [0.1]\n").what()).find("unknown system preset") !=
          std::string::npos);
    CHECK_THROWS_AS((void)parse_config(std::string(kBase) + "scheme: rk4\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config("system: {preset: sv-example}\nepsilons: [0.1]\nchecks: [frobnicate]\n"),
                    ConfigError);
    CHECK_THROWS_AS((void)parse_config("system: {preset: sv-example, rho: 1.5}\nepsilons: [0.1]\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config("system: [1, 2\n"), ConfigError);
  }

  TEST_CASE("inline system with an expression error points at the node") {
    const std::string text =
        "system:\n  f: [\"m - y\"]\n  c: [\"y^2 +\"]\n  sigma: [\"1\"]\n  tau1: [\"0\"]\n  tau2: [\"1\"]\n"
        "  constants: {m: 0.5}\nepsilons: [0.1]\n";
    const auto e = error_of(text);
    CHECK(e.line() == 3);
  }

  TEST_CASE("inline system builds") {
    const std::string text =
        "system:\n  f: [\"m - y\"]\n  c: [\"y^2\"]\n  sigma: [\"1\"]\n  tau1: [\"0\"]\n  tau2: [\"1\"]\n"
        "  constants: {m: 0.5}\n  y0: [0.5]\nepsilons: [0.1]\n";
    const auto cfg = parse_config(text);
    const auto sys = cfg.system.build();
    const std::vector<double> x{0.0}, y{2.0};
    std::vector<double> out(1);
    sys.eval_f(x, y, out);
    CHECK(out[0] == doctest::Approx(-1.5));
    CHECK(cfg.system.initial_fast() == std::vector<double>{0.5});
  }

  TEST_CASE("dt rules") {
    auto cfg = parse_config(std::string(kBase) + "dt: {rule: cap, c_step: 0.2}\n");
    CHECK(cfg.dt.step(1e-2, 5e-3) == doctest::Approx(0.2 * 25e-6 / 1e-2));
    cfg = parse_config(std::string(kBase) + "dt: {rule: fixed, value: 1.0e-4}\n");
    CHECK(cfg.dt.step(1e-2, 5e-3) == 1e-4);
  }

  TEST_CASE("overrides") {
    auto cfg = parse_config(kBase);
    ConfigOverrides o;
    o.seed = 5;
    o.paths = 77;
    o.output = "elsewhere";
    o.checks = std::vector<std::string>{"density"};
    apply_overrides(cfg, o);
    CHECK(cfg.seed == 5);
    CHECK(cfg.paths == 77);
    CHECK(cfg.lln.paths == 77);
    CHECK(cfg.ldp.paths == 77);
    CHECK(cfg.output == "elsewhere");
    CHECK(cfg.checks == std::vector<std::string>{"density"});
    ConfigOverrides bad;
    bad.checks = std::vector<std::string>{"nope"};
    CHECK_THROWS_AS(apply_overrides(cfg, bad), ConfigError);
  }
}
