#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "twoscale/config.hpp"
#include "twoscale/pipeline.hpp"

namespace {

using twoscale::ConfigError;

std::vector<std::string> split_checks(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      if (std::find(twoscale::kKnownChecks.begin(), twoscale::kKnownChecks.end(), tok) == twoscale::kKnownChecks.end()) {
        throw ConfigError("--check: unknown check '" + tok + "'");
      }
      out.push_back(tok);
    }
  }
  return out;
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::string> out;
  std::vector<std::string> checks;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment config (YAML)")->required();
  cmd->add_option("--seed", f.seed, "override the master seed");
  cmd->add_option("--paths", f.paths, "override every Monte Carlo path count")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--check", f.checks, "checks to run, comma separated");
}

// stage: checks the subcommand runs when --check is absent; empty = whatever the config lists
int run_stage(const Flags& f, const std::vector<std::string>& stage, const std::vector<std::string>& fallback) {
  twoscale::ExperimentConfig cfg;
  try {
    cfg = twoscale::load_config(f.config);
    twoscale::ConfigOverrides o;
    o.seed = f.seed;
    o.paths = f.paths;
    o.output = f.out;
    if (!f.checks.empty()) {
      o.checks = split_checks(f.checks);
    } else if (!stage.empty()) {
      std::vector<std::string> picked;
      for (const auto& c : cfg.checks) {
        if (std::find(stage.begin(), stage.end(), c) != stage.end()) picked.push_back(c);
      }
      o.checks = picked.empty() ? fallback : picked;
    }
    twoscale::apply_overrides(cfg, o);
  } catch (const ConfigError& e) {
    std::cerr << f.config;
    if (e.line() > 0) std::cerr << ':' << e.line() << ':' << e.column();
    std::cerr << ": error: " << e.what() << '\n';
    return 2;
  }

  twoscale::PipelineOptions po;
  po.log = &std::cout;
  const auto result = twoscale::run_pipeline(cfg, po);
  std::cout << "report: " << (std::filesystem::path(cfg.output) / "report.json").string() << '\n';
  if (result.passed) return 0;
  std::cerr << "failing checks:";
  for (const auto& c : result.failed_checks()) std::cerr << ' ' << c;
  std::cerr << '\n';
  return 1;
}

int report(const std::string& path) {
  std::filesystem::path p(path);
  if (std::filesystem::is_directory(p)) p /= "report.json";
  std::ifstream in(p);
  if (!in) {
    std::cerr << p.string() << ": error: cannot open report\n";
    return 2;
  }
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    twoscale::render_report(j, std::cout);
  } catch (const std::exception& e) {
    std::cerr << p.string() << ": error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twoscale: fast-slow diffusion homogenization and fluctuation checks"};
  app.set_version_flag("--version", twoscale::kToolVersion);
  app.require_subcommand(1);

  Flags run_f, val_f, hom_f, fl_f, ldp_f;
  auto* run = app.add_subcommand("run", "run every check listed in the config");
  add_flags(run, run_f);
  auto* val = app.add_subcommand("validate", "system validation and invariant density");
  add_flags(val, val_f);
  auto* hom = app.add_subcommand("homogenize", "cell problems, averaged coefficients and limit orbit");
  add_flags(hom, hom_f);
  auto* fl = app.add_subcommand("fluctuate", "law of large numbers and fluctuation ensembles");
  add_flags(fl, fl_f);
  auto* ldp = app.add_subcommand("ldp-tail", "short-time tail against the rate function");
  add_flags(ldp, ldp_f);
  std::string report_path = "report.json";
  auto* rep = app.add_subcommand("report", "render a report.json as tables");
  rep->add_option("path", report_path, "report.json or the directory holding it");
  rep->add_option("--out", report_path, "output directory of a previous run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) return run_stage(run_f, {}, {});
    if (*val) return run_stage(val_f, {"validate", "density"}, {"validate", "density"});
    if (*hom) return run_stage(hom_f, {"corrector", "homogenize"}, {"homogenize"});
    if (*fl) return run_stage(fl_f, {"lln", "clt", "cov_convergence", "limit_ou"}, {"clt"});
    if (*ldp) return run_stage(ldp_f, {"ldp_tail"}, {"ldp_tail"});
    if (*rep) return report(report_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
