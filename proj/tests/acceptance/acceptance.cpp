// Acceptance criteria AC1-AC11. Prints one PASS/FAIL line per criterion;
// exit status is nonzero when any selected criterion fails.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracle_values.hpp"
#include "twoscale/cell_poisson.hpp"
#include "twoscale/config.hpp"
#include "twoscale/fluctuation.hpp"
#include "twoscale/homogenize.hpp"
#include "twoscale/pipeline.hpp"
#include "twoscale/stat_verify.hpp"
#include "twoscale/sv_example.hpp"

namespace fs = std::filesystem;
using namespace twoscale;

namespace {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << (ok ? "" : "[not met] ") << what;
  }
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string config_path(const std::string& name) { return std::string(TWOSCALE_SOURCE_DIR) + "/configs/" + name; }

const std::vector<double> kX0{0.0};

HomogenizeOptions sv_options(const SVParams& p = {}) {
  HomogenizeOptions o;
  o.domain = {p.m - 6.0, p.m + 6.0};
  o.n_grid = 4001;
  return o;
}

const Metric& metric(const CheckResult& c, const std::string& name) {
  for (const auto& m : c.metrics) {
    if (m.name == name) return m;
  }
  throw std::runtime_error("metric " + name + " missing from check " + c.name);
}

PipelineResult run_config(const std::string& file, const std::vector<std::string>& checks, const std::string& out) {
  auto cfg = load_config(config_path(file));
  ConfigOverrides o;
  o.checks = checks;
  o.output = out;
  apply_overrides(cfg, o);
  return run_pipeline(cfg);
}

// AC1: invariant density of the fast process
void ac1(Outcome& r) {
  const SVParams p;
  const auto t0 = std::chrono::steady_clock::now();
  const auto gen = frozen_generator(build_sv(p), Regime::regime1, 1.0, kX0);
  const auto mu = invariant_density_1d(gen, {p.m - 6.0, p.m + 6.0}, 4001);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double err = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double y = mu.grid[i];
    if (std::abs(y - p.m) > 6.0 + 1e-12) continue;
    err = std::max(err, std::abs(mu.density[i] - oracle::kDensityPeak * std::exp(-(y - p.m) * (y - p.m))));
  }
  r.require(err < 1e-8, "sup error " + num(err) + " < 1e-8");
  r.require(secs < 1.0, "runtime " + num(secs) + " s < 1 s");
}

// AC2: corrector against the closed form and Feynman-Kac Monte Carlo
void ac2(Outcome& r) {
  const SVParams p;
  const auto t0 = std::chrono::steady_clock::now();
  const auto gen = frozen_generator(build_sv(p), Regime::regime1, 1.0, kX0);
  const auto mu = invariant_density_1d(gen, {p.m - 6.0, p.m + 6.0}, 4001);
  const auto G = [&](double y) { return (y * y - oracle::kCbar) / p.gamma; };
  const auto sol = solve_cell_1d(gen, scalar_field([&](double, double y) { return G(y); }), 1, mu);
  double err = 0.0;
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    if (std::abs(sol.grid[i] - p.m) <= 4.0 + 1e-12) {
      err = std::max(err, std::abs(sol.values[0][i] - phi2_closed_form(sol.grid[i], p)));
    }
  }
  r.require(err < 1e-6, "quadrature sup error " + num(err) + " < 1e-6");

  const std::vector<std::vector<double>> pts{{p.m - 1.5}, {p.m - 0.5}, {p.m}, {p.m + 0.5}, {p.m + 1.5}};
  const auto mc = solve_cell_mc(gen, [&](std::span<const double> y) { return G(y[0]); }, pts, 8.0, 20000, 2024,
                                McCellOptions{0.01});
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    worst = std::max(worst, std::abs(mc.values[i] - phi2_closed_form(pts[i][0], p)) / mc.std_errors[i]);
  }
  r.require(worst <= 3.0, "Feynman-Kac max deviation " + num(worst) + " sigma <= 3");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.require(secs < 30.0, "runtime " + num(secs) + " s < 30 s");
}

// AC3: averaged coefficients
void ac3(Outcome& r) {
  const SVParams p;
  const auto sys = build_sv(p);
  const HomogenizedModel m1(sys, Regime::regime1, 1.0, sv_options(p));
  const HomogenizedModel m2(sys, Regime::regime2, p.gamma, sv_options(p));
  const double cbar = m2.lambda_bar(kX0)[0];
  r.require(std::abs(cbar - oracle::kCbar) < 1e-8, "cbar " + num(cbar) + " vs 0.75 within 1e-8");
  const double q1 = m1.q_bar(kX0)[0];
  r.require(std::abs(q1 - oracle::kQbar1) < 1e-8, "qbar1 " + num(q1) + " vs 1 within 1e-8");
  const double q2 = m2.q_bar(kX0)[0];
  r.require(std::abs(q2 - oracle::kQbar2) < 1e-6, "qbar2 " + num(q2) + " vs 1.375 within 1e-6");
  const double j2 = m2.J_bar(kX0)[0];
  r.require(std::abs(j2) < 1e-8, "Jbar2 " + num(j2) + " within 1e-8");

  SVParams pr = p;
  pr.rho = 0.5;
  const HomogenizedModel mr(build_sv(pr), Regime::regime2, pr.gamma, sv_options(pr));
  const double qr = mr.q_bar(kX0)[0];
  r.require(std::abs(qr - oracle::kQbar2Rho05) < 1e-6, "qbar2(rho=0.5) " + num(qr) + " vs " +
                                                           num(oracle::kQbar2Rho05) + " within 1e-6");
  r.require(std::abs(qr - qbar2_closed_form(pr)) < 1e-6, "formula by Gauss-Hermite " + num(qbar2_closed_form(pr)));
}

// AC4: large-gamma limit
void ac4(Outcome& r) {
  const SVParams p;
  const HomogenizedModel m1(build_sv(p), Regime::regime1, 1.0, sv_options(p));
  const double q1 = m1.q_bar(kX0)[0];
  std::vector<double> q;
  for (double g : {2.0, 10.0, 100.0}) {
    SVParams pg = p;
    pg.gamma = g;
    q.push_back(HomogenizedModel(build_sv(pg), Regime::regime2, g, sv_options(pg)).q_bar(kX0)[0]);
  }
  r.require(q[0] > q[1] && q[1] > q[2] && q[2] >= q1,
            "decreasing " + num(q[0]) + " > " + num(q[1]) + " > " + num(q[2]) + " >= " + num(q1));
  r.require(std::abs(q[2] - q1) < 2e-4, "|qbar2(100) - qbar1| = " + num(std::abs(q[2] - q1)) + " < 2e-4");
}

// AC5: law of large numbers
void ac5(Outcome& r) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_config("sv_regime2.cfg", {"lln"}, "acceptance_out/ac5");
  const auto& c = res.checks.at(0);
  std::vector<double> med;
  for (double e : {1e-1, 1e-2, 1e-3}) {
    std::ostringstream name;
    name << "median_sup_error[eps=" << std::setprecision(10) << e << "]";
    med.push_back(metric(c, name.str()).value);
  }
  r.require(med[0] > med[1] && med[1] > med[2],
            "medians " + num(med[0]) + " > " + num(med[1]) + " > " + num(med[2]));
  const double bound = 3.0 * std::sqrt(oracle::kQbar2 * 1e-3);
  r.require(med[2] < bound, "median at 1e-3 " + num(med[2]) + " < " + num(bound));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.require(secs < 300.0, "runtime " + num(secs) + " s < 300 s");
}

void clt_criterion(Outcome& r, const std::string& file, const std::string& out, double target) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_config(file, {"clt"}, out);
  const auto& c = res.checks.at(0);
  if (!c.error.empty()) throw std::runtime_error(c.error);
  const double eps = metric(c, "epsilon").value;
  r.require(eps == 1e-3, "epsilon " + num(eps));
  // re-read the terminal sample and test it against the oracle law directly
  std::ifstream in(fs::path(out) / "eta_terminal.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> eta;
  while (std::getline(in, line)) eta.push_back(std::stod(line.substr(line.find(',') + 1)));
  r.require(eta.size() == 5000, "n = " + std::to_string(eta.size()));
  const auto mom = moment_report(eta);
  const double rel = std::abs(mom.variance.value - target) / target;
  r.require(rel < 0.10, "variance " + num(mom.variance.value) + ", rel err " + num(rel) + " < 0.10");
  const auto ks = ks_gaussian(eta, 0.0, target);
  r.require(ks.statistic < 0.03, "KS " + num(ks.statistic) + " < 0.03");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.require(secs < 600.0, "runtime " + num(secs) + " s < 600 s");
}

// AC6 / AC7: fluctuation limit in both regimes
void ac6(Outcome& r) { clt_criterion(r, "sv_regime2.cfg", "acceptance_out/ac6", oracle::kQbar2); }
void ac7(Outcome& r) { clt_criterion(r, "sv_regime1.cfg", "acceptance_out/ac7", oracle::kQbar1); }

// AC8: schedule classification
void ac8(Outcome& r) {
  const auto a = classify_schedule(1e-2, DeltaRule::power(1.0, 2.0), Regime::regime1, 0.0);
  r.require(a.ell_class == EllClass::infinite && a.beta == std::sqrt(1e-2) && a.noise_on() && a.drift_weight() == 0.0,
            "regime 1, delta = eps^2: ell = " + to_string(a.ell_class) + ", beta = " + num(a.beta));
  const auto b = classify_schedule(1e-3, DeltaRule::ratio(), Regime::regime2, 2.0);
  r.require(b.ell_class == EllClass::infinite && b.theta == 0.0 && b.beta == std::sqrt(1e-3),
            "regime 2, delta = eps/gamma: ell = " + to_string(b.ell_class) + ", theta = " + num(b.theta));
  const auto c = classify_schedule(1e-6, DeltaRule::power(1.0, 1.25), Regime::regime1, 0.0);
  r.require(c.ell_class == EllClass::zero && c.beta == c.theta && !c.noise_on() && c.drift_weight() == 1.0,
            "regime 1, delta = eps^(5/4): ell = " + to_string(c.ell_class) + ", beta = theta = " + num(c.beta));
}

// AC9: Duhamel representation for A = -1
void ac9(Outcome& r) {
  const std::vector<double> A{-1.0}, J{0.0}, q{1.0};
  const auto lim = ou_limit_constant(A, J, q, 1.0, 0.0, true);
  const std::size_t n = 2000;
  const auto d = duhamel_solution(lim, 1.0, 1e-4, n, 909);
  double err = 0.0;
  for (std::size_t i = 0; i < d.times.size(); ++i) err = std::max(err, std::abs(d.Psi[i] - std::exp(-d.times[i])));
  r.require(err < 1e-8, "Psi vs exp(-t) sup error " + num(err) + " < 1e-8");
  const auto mom = moment_report(d.eta.marginal(d.eta.times.size() - 1));
  const double band = 3.0 * oracle::kLyapunovT1 * std::sqrt(2.0 / static_cast<double>(n - 1));
  const double dev = std::abs(mom.variance.value - oracle::kLyapunovT1);
  r.require(dev <= band, "terminal variance " + num(mom.variance.value) + " vs " + num(oracle::kLyapunovT1) +
                             ", |diff| " + num(dev) + " <= " + num(band));
}

// AC10: short-time tail against the rate function
void ac10(Outcome& r) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = load_config(config_path("sv_ldp_tail.cfg"));
  for (double nu : {1.0, 1.5}) {
    const auto est = short_time_tail(cfg.system.sv, nu, 1e-3, 100000, cfg.seed);
    r.require(est.relative_log_error < 0.25, "nu = " + num(nu) + ": p_hat " + num(est.probability) + " vs " +
                                                 num(est.predicted) + ", relative log error " +
                                                 num(est.relative_log_error) + " < 0.25");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.require(secs < 300.0, "runtime " + num(secs) + " s < 300 s");
}

std::string strip_timestamp(const fs::path& file) {
  std::ifstream in(file);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("\"timestamp\"") == std::string::npos) out << line << '\n';
  }
  return out.str();
}

// AC11: determinism of the whole pipeline
void ac11(Outcome& r) {
  for (const char* dir : {"acceptance_out/ac11_a", "acceptance_out/ac11_b"}) {
    auto cfg = load_config(config_path("sv_quick.cfg"));
    ConfigOverrides o;
    o.output = dir;
    apply_overrides(cfg, o);
    (void)run_pipeline(cfg);
  }
  const auto a = strip_timestamp("acceptance_out/ac11_a/report.json");
  const auto b = strip_timestamp("acceptance_out/ac11_b/report.json");
  r.require(!a.empty() && a == b, "report.json identical apart from the timestamp (" + std::to_string(a.size()) +
                                      " bytes)");
}

const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> kCriteria{
    {"invariant density", ac1},     {"corrector oracle", ac2},   {"averaged coefficients", ac3},
    {"gamma limit", ac4},           {"law of large numbers", ac5}, {"fluctuations, regime 2", ac6},
    {"fluctuations, regime 1", ac7}, {"scale classification", ac8}, {"Duhamel consistency", ac9},
    {"short-time tail", ac10},      {"determinism", ac11}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories("acceptance_out");

  bool all = true;
  for (std::size_t i = 0; i < kCriteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome r;
    try {
      kCriteria[i].second(r);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail << "error: " << e.what();
    }
    all = all && r.passed;
    std::cout << "AC" << id << ' ' << (r.passed ? "PASS" : "FAIL") << ' ' << kCriteria[i].first << ": "
              << r.detail.str() << std::endl;
  }
  return all ? 0 : 1;
}
