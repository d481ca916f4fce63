#include "twoscale/pipeline.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

#include "twoscale/cell_poisson.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/fluctuation.hpp"
#include "twoscale/homogenize.hpp"
#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/stat_verify.hpp"
#include "twoscale/sv_example.hpp"

namespace twoscale {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t check_seed(std::uint64_t master, const std::string& check) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : check) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ h);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> PipelineResult::failed_checks() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (!c.passed) out.push_back(c.name);
  }
  return out;
}

namespace {

Metric bound(const std::string& name, double value, const std::string& cmp, double tol, const std::string& reference,
             std::optional<double> target = std::nullopt) {
  Metric m;
  m.name = name;
  m.value = value;
  m.comparison = cmp;
  m.tolerance = tol;
  m.target = target;
  m.reference = reference;
  m.asserted = true;
  if (cmp == "<=") {
    m.passed = value <= tol;
  } else if (cmp == "<") {
    m.passed = value < tol;
  } else if (cmp == ">") {
    m.passed = value > tol;
  } else if (cmp == ">=") {
    m.passed = value >= tol;
  } else {
    throw std::logic_error("unknown comparison " + cmp);
  }
  return m;
}

Metric info(const std::string& name, double value, const std::string& reference = "",
            std::optional<double> target = std::nullopt) {
  Metric m;
  m.name = name;
  m.value = value;
  m.reference = reference;
  m.target = target;
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

class Context {
 public:
  Context(const ExperimentConfig& cfg, bool write, std::ostream* log)
      : cfg(cfg), sys(cfg.system.build()), x0(cfg.system.initial_slow()), y0(cfg.system.initial_fast()),
        write_(write), log_(log) {}

  const ExperimentConfig& cfg;
  MultiscaleSystem sys;
  std::vector<double> x0, y0;

  bool closed_forms() const { return cfg.system.preset && cfg.system.sv.c_is_y2; }

  HomogenizeOptions homogenize_options() const {
    HomogenizeOptions o;
    o.domain = {cfg.grid.lo, cfg.grid.hi};
    o.n_grid = cfg.grid.n_grid;
    return o;
  }

  const HomogenizedModel& model(Regime r) {
    auto& slot = models_[r];
    if (!slot) {
      slot = std::make_unique<HomogenizedModel>(sys, r, r == Regime::regime2 ? cfg.gamma : 1.0, homogenize_options());
    }
    return *slot;
  }
  const HomogenizedModel& model() { return model(cfg.regime); }

  const LimitOrbit& orbit() {
    if (!orbit_) orbit_ = std::make_unique<LimitOrbit>(solve_limit_ode(model(), x0, cfg.horizon, cfg.grid.ode_dt));
    return *orbit_;
  }

  double qbar_scalar() { return model().q_bar(x0)[0]; }

  double clt_epsilon() const { return cfg.clt.epsilon.value_or(cfg.epsilons.back()); }

  const OULimit& limit(const ScaleSchedule& sched) {
    const auto key = std::make_pair(static_cast<int>(sched.ell_class), sched.epsilon);
    auto& slot = limits_[key];
    if (!slot) {
      const auto& o = orbit();
      const std::size_t steps = o.times.size() - 1;
      slot = std::make_unique<OULimit>(ou_limit(model(), o, sched, std::max<std::size_t>(1, steps / 64)));
    }
    return *slot;
  }

  SimulationOptions sim_options() const {
    SimulationOptions s;
    s.scheme = cfg.scheme;
    return s;
  }

  void log(const std::string& line) {
    if (log_ != nullptr) *log_ << line << '\n';
  }

  template <typename Writer>
  void artifact(CheckResult& res, const std::string& name, Writer&& writer) {
    res.artifacts.push_back(name);
    if (!write_) return;
    std::ofstream out(fs::path(cfg.output) / name);
    if (!out) throw std::runtime_error("cannot write " + name);
    writer(out);
  }

 private:
  bool write_;
  std::ostream* log_;
  std::map<Regime, std::unique_ptr<HomogenizedModel>> models_;
  std::unique_ptr<LimitOrbit> orbit_;
  std::map<std::pair<int, double>, std::unique_ptr<OULimit>> limits_;
};

// ---------------------------------------------------------------- checks

void check_validate(Context& ctx, CheckResult& res) {
  ProbeGrid probe = ProbeGrid::default_for(ctx.sys);
  probe.regime = ctx.cfg.regime;
  probe.gamma = ctx.cfg.gamma;
  const auto rep = validate_system(ctx.sys, probe);
  res.metrics.push_back(bound("nondegeneracy_floor", rep.nondegeneracy_floor, ">", probe.nondegeneracy_tolerance,
                              "smallest eigenvalue of tau1 tau1^T + tau2 tau2^T on the probe grid"));
  res.metrics.push_back(info("recurrence_ok", rep.recurrence_ok ? 1.0 : 0.0, "drift . y negative and decreasing"));
  res.metrics.push_back(info("recurrence_radius", rep.recurrence_radius));
  for (const auto& [k, v] : rep.growth_exponents) res.metrics.push_back(info("growth_exponent_" + k, v));
  for (const auto& w : rep.warnings) res.notes.push_back(w);
  ctx.log("  nondegeneracy floor = " + fmt(rep.nondegeneracy_floor) +
          (rep.recurrence_ok ? ", recurrence confirmed" : ", recurrence NOT confirmed"));
}

void check_density(Context& ctx, CheckResult& res) {
  const auto gen = frozen_generator(ctx.sys, ctx.cfg.regime, ctx.cfg.gamma, ctx.x0);
  const auto mu = invariant_density_1d(gen, {ctx.cfg.grid.lo, ctx.cfg.grid.hi}, ctx.cfg.grid.n_grid);
  res.metrics.push_back(bound("mass_error", std::abs(mu.mass() - 1.0), "<=", 1e-10, "trapezoid mass of the density"));
  res.metrics.push_back(bound("truncation_mass_bound", mu.truncation_mass_bound, "<=", 1e-8, "tail mass outside grid"));
  for (const auto& [k, v] : mu.stationarity_residual) {
    res.metrics.push_back(bound("stationarity_residual[" + k + "]", std::abs(v), "<=", 1e-6, "int L phi dmu = 0"));
  }
  if (ctx.cfg.system.preset) {
    const double m = ctx.cfg.system.sv.m;
    double err = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double y = mu.grid[i];
      if (std::abs(y - m) > 6.0 + 1e-12) continue;
      const double exact = std::exp(-(y - m) * (y - m)) / std::sqrt(std::numbers::pi);
      err = std::max(err, std::abs(mu.density[i] - exact));
      peak = std::max(peak, mu.density[i]);
    }
    res.metrics.push_back(bound("density_sup_error", err, "<", 1e-8, "Gaussian density exp(-(y-m)^2)/sqrt(pi)"));
    res.metrics.push_back(info("density_peak", peak, "density maximum 1/sqrt(pi)", 1.0 / std::sqrt(std::numbers::pi)));
  }
  ctx.artifact(res, "density.csv", [&](std::ostream& os) { write_density_csv(mu, os); });
}

void check_corrector(Context& ctx, CheckResult& res) {
  if (!ctx.closed_forms()) {
    res.notes.push_back("corrector oracle needs the sv-example preset with c = y^2; skipped");
    return;
  }
  const SVParams& p = ctx.cfg.system.sv;
  const auto gen = frozen_generator(ctx.sys, Regime::regime1, 1.0, ctx.x0);
  const auto mu = invariant_density_1d(gen, {ctx.cfg.grid.lo, ctx.cfg.grid.hi}, ctx.cfg.grid.n_grid);
  const double cbar = cbar_closed_form(p);
  const auto sol = solve_cell_1d(
      gen, scalar_field([&](double, double y) { return (y * y - cbar) / p.gamma; }), 1, mu);
  double err = 0.0;
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    if (std::abs(sol.grid[i] - p.m) > 4.0 + 1e-12) continue;
    err = std::max(err, std::abs(sol.values[0][i] - phi2_closed_form(sol.grid[i], p)));
  }
  res.metrics.push_back(bound("phi2_sup_error", err, "<", 1e-6, "closed-form corrector on [m-4, m+4]"));
  res.metrics.push_back(info("phi2_at_0", sol.value(0, 0.0), "closed form", phi2_closed_form(0.0, p)));
  res.metrics.push_back(bound("centering_residual", sol.centering_residual, "<=", 1e-8, "int u dmu = 0"));
  res.metrics.push_back(bound("generator_residual", sol.generator_residual, "<", 1e-4, "|L u + G| / (1 + |G|)"));
  res.metrics.push_back(info("growth_exponent", sol.growth_exponent_fit, "quadratic corrector", 2.0));
  ctx.artifact(res, "cell_phi.csv", [&](std::ostream& os) { write_cell_csv(sol, 0, os); });
}

void check_homogenize(Context& ctx, CheckResult& res) {
  const auto& model = ctx.model();
  const auto point = model.at(ctx.x0);
  const std::size_t m = ctx.sys.slow_dim;
  for (std::size_t k = 0; k < m; ++k) {
    const std::string s = m == 1 ? "" : "[" + std::to_string(k) + "]";
    res.metrics.push_back(info("lambda_bar" + s, point->lambda.bar[k]));
    res.metrics.push_back(info("J_bar" + s, point->coeffs.J_bar[k]));
  }
  for (std::size_t e = 0; e < m * m; ++e) {
    res.metrics.push_back(info(m == 1 ? "q_bar" : "q_bar[" + std::to_string(e) + "]", point->coeffs.q_bar[e]));
  }
  res.metrics.push_back(bound("lambda_centering", point->lambda.centering_residual, "<=", 1e-8,
                              "int (lambda - lambda_bar) dmu = 0"));
  {
    const auto& R = point->coeffs.q_bar_sqrt;
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) s += R[i * m + k] * R[j * m + k];
        err = std::max(err, std::abs(s - point->coeffs.q_bar[i * m + j]));
      }
    }
    res.metrics.push_back(bound("q_bar_sqrt_error", err, "<=", 1e-10, "q_bar^{1/2} q_bar^{1/2}^T = q_bar"));
  }
  const auto& orbit = ctx.orbit();
  for (std::size_t k = 0; k < m; ++k) {
    res.metrics.push_back(info("orbit_terminal" + (m == 1 ? std::string() : "[" + std::to_string(k) + "]"),
                               orbit.states[(orbit.times.size() - 1) * m + k]));
  }
  res.metrics.push_back(bound("orbit_error_estimate", orbit.error_estimate, "<=", 1e-8, "RK4 step halving"));
  ctx.artifact(res, "orbit.csv", [&](std::ostream& os) { write_orbit_csv(orbit, os); });

  std::ostringstream line;
  line << "  lambda_bar = " << fmt(point->lambda.bar[0]) << ", J_bar = " << fmt(point->coeffs.J_bar[0])
       << ", q_bar = " << fmt(point->coeffs.q_bar[0]);
  ctx.log(line.str());

  if (!ctx.closed_forms() || m != 1) return;
  const SVParams& p = ctx.cfg.system.sv;
  const auto& m1 = ctx.model(Regime::regime1);
  const auto& m2 = ctx.model(Regime::regime2);
  const double lb1 = m1.lambda_bar(ctx.x0)[0], lb2 = m2.lambda_bar(ctx.x0)[0];
  const double q1 = m1.q_bar(ctx.x0)[0], q2 = m2.q_bar(ctx.x0)[0];
  const double cbar = cbar_closed_form(p), q = q_closed_form(p), q2_exact = qbar2_closed_form(p);
  res.metrics.push_back(bound("cbar_error", std::abs(lb2 - cbar), "<=", 1e-8, "cbar = 1/2 + m^2", cbar));
  res.metrics.push_back(bound("regime_lambda_bar_gap", std::abs(lb1 - lb2), "<=", 1e-10, "same law of large numbers"));
  res.metrics.push_back(bound("qbar1_error", std::abs(q1 - q), "<=", 1e-8, "qbar1 = int sigma^2 dmu", q));
  res.metrics.push_back(bound("qbar2_error", std::abs(q2 - q2_exact), "<=", 1e-6, "closed-form qbar2", q2_exact));
  res.metrics.push_back(bound("Jbar2_abs", std::abs(m2.J_bar(ctx.x0)[0]), "<=", 1e-8, "Jbar2 = 0 by construction"));
  if (p.rho == 0.0) res.metrics.push_back(bound("qbar2_minus_qbar1", q2 - q1, ">", 0.0, "qbar2 > qbar1 for rho = 0"));
  ctx.log("  lambda_bar = " + fmt(lb2) + ", qbar1 = " + fmt(q1) + ", qbar2 = " + fmt(q2));
}

void check_lln(Context& ctx, CheckResult& res) {
  const auto& orbit = ctx.orbit();
  ConvergenceStudy study;
  study.metric = "median sup_t |X - Xbar|";
  const std::uint64_t seed = check_seed(ctx.cfg.seed, "lln");
  std::ostringstream rows;
  for (double eps : ctx.cfg.epsilons) {
    const auto sched = ctx.cfg.schedule(eps);
    const double dt = ctx.cfg.dt.step(eps, sched.delta);
    const auto rep = lln_supnorm(ctx.sys, sched, orbit, ctx.y0, ctx.cfg.horizon, dt, ctx.cfg.lln.paths, seed,
                                 ctx.sim_options());
    // normal-approximation standard error of the median
    std::vector<double> e = rep.sup_errors;
    const double mean = pairwise_sum(e) / static_cast<double>(e.size());
    for (double& v : e) v = (v - mean) * (v - mean);
    const double sd = std::sqrt(pairwise_sum(e) / static_cast<double>(std::max<std::size_t>(1, e.size() - 1)));
    const double se = 1.2533 * sd / std::sqrt(static_cast<double>(rep.sup_errors.size()));
    study.add(eps, rep.median, se);
    res.metrics.push_back(info("median_sup_error[eps=" + fmt(eps) + "]", rep.median));
    res.metrics.push_back(info("p90_sup_error[eps=" + fmt(eps) + "]", rep.p90));
    ctx.log("  eps = " + fmt(eps) + ": median sup error " + fmt(rep.median) + ", p90 " + fmt(rep.p90));
  }
  Metric mono;
  mono.name = "median_sup_error_decreasing";
  mono.value = study.monotone ? 1.0 : 0.0;
  mono.comparison = "decreasing";
  mono.tolerance = 0.0;
  mono.reference = "strict decrease of the median over the epsilon list";
  mono.asserted = ctx.cfg.epsilons.size() > 1;
  mono.passed = study.monotone;
  res.metrics.push_back(mono);
  const double eps = ctx.cfg.epsilons.back();
  const double limit = 3.0 * std::sqrt(ctx.qbar_scalar() * eps);
  res.metrics.push_back(bound("median_sup_error_smallest_eps", study.values.back(), "<", limit,
                              "3 sqrt(qbar eps) at the smallest epsilon"));
  ctx.artifact(res, "lln.csv", [&](std::ostream& os) { study.write_csv(os); });
}

void check_clt(Context& ctx, CheckResult& res) {
  const double eps = ctx.clt_epsilon();
  const auto sched = ctx.cfg.schedule(eps);
  const std::size_t paths = ctx.cfg.clt.paths.value_or(ctx.cfg.paths);
  const double dt = ctx.cfg.dt.step(eps, sched.delta);
  const auto& orbit = ctx.orbit();
  EnsembleOptions eo;
  eo.sim = ctx.sim_options();
  const auto ens =
      eta_ensemble(ctx.sys, sched, orbit, ctx.y0, ctx.cfg.horizon, dt, paths, check_seed(ctx.cfg.seed, "clt"), eo);
  const auto& lim = ctx.limit(sched);
  const double T = ctx.cfg.horizon;
  res.metrics.push_back(info("epsilon", eps));
  res.metrics.push_back(info("beta", sched.beta));
  res.metrics.push_back(info("dt", ens.dt));
  double eta0 = 0.0;
  for (std::size_t p = 0; p < ens.n_paths; ++p) eta0 = std::max(eta0, std::abs(ens.at(p, 0, 0)));
  res.metrics.push_back(bound("eta0_abs_max", eta0, "<=", 0.0, "eta_0 = 0 exactly"));

  const auto mean_T = ou_mean(lim, T, ctx.cfg.limit_ou.dt)[0];
  const auto terminal = ens.marginal(ens.times.size() - 1);
  const auto mom = moment_report(terminal);
  std::vector<double> ks_values;
  if (!lim.noise_on) {
    res.notes.push_back("ell = 0: the limit is deterministic, distributional checks skipped");
    res.metrics.push_back(info("terminal_mean", mom.mean.value, "deterministic limit", mean_T));
  } else {
    const auto cov = ou_covariance(lim, T, ctx.cfg.limit_ou.dt);
    const double sigma_T = cov.terminal()[0];
    for (std::size_t i = 1; i < ens.times.size(); ++i) {
      const auto idx = static_cast<std::size_t>(std::llround(ens.times[i] / T * static_cast<double>(cov.times.size() - 1)));
      const double s = cov.at(idx)[0];
      const double mu_t = ou_mean(lim, ens.times[i], ctx.cfg.limit_ou.dt)[0];
      ks_values.push_back(ks_gaussian(ens.marginal(i), mu_t, s).statistic);
    }
    const auto ks = ks_gaussian(terminal, mean_T, sigma_T);
    res.metrics.push_back(info("sigma_T", sigma_T, "Lyapunov equation"));
    res.metrics.push_back(info("terminal_variance", mom.variance.value, "", sigma_T));
    res.metrics.push_back(bound("variance_relative_error", std::abs(mom.variance.value - sigma_T) / sigma_T, "<", 0.10,
                                "limit covariance Sigma_T", sigma_T));
    res.metrics.push_back(bound("ks_statistic", ks.statistic, "<", 0.03, "KS distance to N(mean_T, Sigma_T)"));
    res.metrics.push_back(info("ks_p_value", ks.p_value));
    res.metrics.push_back(bound("mean_deviation_sigmas",
                                std::abs(mom.mean.value - mean_T) / std::sqrt(sigma_T / static_cast<double>(paths)),
                                "<=", 3.0, "terminal mean within 3 standard errors", mean_T));
    res.metrics.push_back(bound("skewness_deviation_errors", std::abs(mom.skewness.value) / mom.skewness.error, "<=",
                                3.0, "Gaussian limit has zero skewness"));
    res.metrics.push_back(info("excess_kurtosis", mom.excess_kurtosis.value, "Gaussian limit", 0.0));
    ctx.log("  eps = " + fmt(eps) + ", n = " + std::to_string(paths) + ": var " + fmt(mom.variance.value) +
            " vs " + fmt(sigma_T) + ", KS " + fmt(ks.statistic));
  }
  ctx.artifact(res, "eta_terminal.csv", [&](std::ostream& os) { write_terminal_csv(ens, os); });
  ctx.artifact(res, "ensemble.json", [&](std::ostream& os) { write_ensemble_json(ens, ks_values, os); });
}

void check_cov_convergence(Context& ctx, CheckResult& res) {
  const auto& orbit = ctx.orbit();
  const std::size_t paths = ctx.cfg.cov_convergence.paths.value_or(ctx.cfg.paths);
  const std::size_t seeds = ctx.cfg.cov_convergence.seeds;
  ConvergenceStudy study;
  study.metric = "|Var(eta_T) - Sigma_T|";
  for (double eps : ctx.cfg.epsilons) {
    const auto sched = ctx.cfg.schedule(eps);
    const auto& lim = ctx.limit(sched);
    if (!lim.noise_on) throw std::runtime_error("covariance convergence needs a noisy limit (ell != 0)");
    const double sigma_T = ou_covariance(lim, ctx.cfg.horizon, ctx.cfg.limit_ou.dt).terminal()[0];
    const double dt = ctx.cfg.dt.step(eps, sched.delta);
    std::vector<double> errs;
    for (std::size_t s = 0; s < seeds; ++s) {
      EnsembleOptions eo;
      eo.sim = ctx.sim_options();
      eo.record_times = {0.0, ctx.cfg.horizon};
      const auto ens = eta_ensemble(ctx.sys, sched, orbit, ctx.y0, ctx.cfg.horizon, dt, paths,
                                    check_seed(ctx.cfg.seed, "cov_convergence") + s, eo);
      errs.push_back(std::abs(ens.summary.cov.back()[0][0] - sigma_T));
    }
    const double mean = pairwise_sum(errs) / static_cast<double>(seeds);
    // Monte Carlo floor of a variance estimate: Sigma sqrt(2/(n-1)), averaged over seeds.
    const double noise = sigma_T * std::sqrt(2.0 / static_cast<double>(paths - 1)) / std::sqrt(static_cast<double>(seeds));
    study.add(eps, mean, noise);
    res.metrics.push_back(info("covariance_error[eps=" + fmt(eps) + "]", mean, "", 0.0));
    ctx.log("  eps = " + fmt(eps) + ": |Var - Sigma| = " + fmt(mean) + " (MC floor " + fmt(noise) + ")");
  }
  Metric mono;
  mono.name = "covariance_error_decreasing";
  mono.comparison = "decreasing";
  mono.tolerance = 2.0;
  mono.reference = "each step may rise by at most 2 combined Monte Carlo errors";
  mono.asserted = true;
  mono.passed = study.verdict(2.0);
  mono.value = mono.passed ? 1.0 : 0.0;
  res.metrics.push_back(mono);
  ctx.artifact(res, "cov_convergence.csv", [&](std::ostream& os) { study.write_csv(os); });
}

void check_limit_ou(Context& ctx, CheckResult& res) {
  const auto sched = ctx.cfg.schedule(ctx.clt_epsilon());
  const auto& lim = ctx.limit(sched);
  const double T = ctx.cfg.horizon, dt = ctx.cfg.limit_ou.dt;
  const std::size_t n = ctx.cfg.limit_ou.paths;
  const auto seed = check_seed(ctx.cfg.seed, "limit_ou");
  const auto direct = simulate_limit_ou(lim, T, dt, n, seed);
  const auto duh = duhamel_solution(lim, T, dt, n, seed);
  const double mean_T = ou_mean(lim, T, dt)[0];
  const auto a = moment_report(direct.marginal(direct.times.size() - 1));
  const auto b = moment_report(duh.eta.marginal(duh.eta.times.size() - 1));
  res.metrics.push_back(info("psi_max_condition", duh.max_condition, "", std::nullopt));
  if (!lim.noise_on) {
    res.metrics.push_back(bound("direct_mean_error", std::abs(a.mean.value - mean_T), "<=", 1e-6, "deterministic limit"));
    res.metrics.push_back(bound("duhamel_mean_error", std::abs(b.mean.value - mean_T), "<=", 1e-6, "deterministic limit"));
    return;
  }
  const double sigma_T = ou_covariance(lim, T, dt).terminal()[0];
  const double band = 3.0 * sigma_T * std::sqrt(2.0 / static_cast<double>(n - 1));
  res.metrics.push_back(bound("direct_variance_error", std::abs(a.variance.value - sigma_T), "<=", band,
                              "3 Monte Carlo standard errors of a variance", sigma_T));
  res.metrics.push_back(bound("duhamel_variance_error", std::abs(b.variance.value - sigma_T), "<=", band,
                              "3 Monte Carlo standard errors of a variance", sigma_T));
  res.metrics.push_back(bound("direct_duhamel_variance_gap", std::abs(a.variance.value - b.variance.value), "<=",
                              std::sqrt(2.0) * band, "combined bands"));
  ctx.log("  direct var " + fmt(a.variance.value) + ", Duhamel var " + fmt(b.variance.value) + ", Sigma_T " +
          fmt(sigma_T));
}

void check_ldp_tail(Context& ctx, CheckResult& res) {
  if (!ctx.cfg.system.preset) throw std::runtime_error("ldp_tail needs the sv-example preset");
  const auto& p = ctx.cfg.system.sv;
  const auto seed = check_seed(ctx.cfg.seed, "ldp_tail");
  TailOptions opts;
  opts.dt = ctx.cfg.ldp.dt;
  std::ostringstream csv;
  csv << "nu,t,p_hat,log_p_hat,predicted_log,relative_log_error\n" << std::setprecision(17);
  for (double nu : ctx.cfg.ldp.nu) {
    const auto est = short_time_tail(p, nu, ctx.cfg.ldp.t, ctx.cfg.ldp.paths, seed, opts);
    const std::string tag = "[nu=" + fmt(nu) + "]";
    res.metrics.push_back(info("tail_probability" + tag, est.probability, "exp(-nu^2/(2q))", est.predicted));
    res.metrics.push_back(bound("relative_log_error" + tag, est.relative_log_error, "<", 0.25,
                                "|log p - (-nu^2/(2q))| / (nu^2/(2q))"));
    csv << nu << ',' << est.t << ',' << est.probability << ',' << est.log_probability << ',' << est.predicted_log << ','
        << est.relative_log_error << '\n';
    ctx.log("  nu = " + fmt(nu) + ": p_hat " + fmt(est.probability) + " vs " + fmt(est.predicted) +
            ", relative log error " + fmt(est.relative_log_error));
  }
  ctx.artifact(res, "ldp_tail.csv", [&](std::ostream& os) { os << csv.str(); });
}

using CheckFn = std::function<void(Context&, CheckResult&)>;

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> r{
      {"validate", check_validate}, {"density", check_density},   {"corrector", check_corrector},
      {"homogenize", check_homogenize}, {"lln", check_lln},        {"clt", check_clt},
      {"cov_convergence", check_cov_convergence}, {"limit_ou", check_limit_ou}, {"ldp_tail", check_ldp_tail}};
  return r;
}

json metric_json(const Metric& m) {
  json j;
  j["name"] = m.name;
  j["value"] = std::isfinite(m.value) ? json(m.value) : json(std::to_string(m.value));
  j["comparison"] = m.comparison;
  j["tolerance"] = m.tolerance ? json(*m.tolerance) : json(nullptr);
  j["target"] = m.target ? json(*m.target) : json(nullptr);
  if (!m.reference.empty()) j["reference"] = m.reference;
  j["asserted"] = m.asserted;
  j["passed"] = m.passed;
  return j;
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["source"] = cfg.source_path;
  j["system"] = cfg.system.preset ? cfg.system.preset_name : std::string("inline");
  if (cfg.system.preset) {
    const auto& p = cfg.system.sv;
    j["parameters"] = {{"m", p.m}, {"rho", p.rho}, {"gamma", p.gamma}, {"sigma", cfg.system.sigma_source},
                       {"c", cfg.system.c_source}, {"x0", p.x0}, {"y0", p.initial_fast()}};
  }
  j["regime"] = static_cast<int>(cfg.regime);
  j["gamma"] = cfg.gamma;
  j["delta_rule"] = cfg.delta_rule.describe();
  j["epsilons"] = cfg.epsilons;
  j["horizon"] = cfg.horizon;
  j["dt"] = cfg.dt.describe();
  j["scheme"] = to_string(cfg.scheme);
  j["paths"] = cfg.paths;
  j["seed"] = cfg.seed;
  j["checks"] = cfg.checks;
  json sched = json::array();
  for (double e : cfg.epsilons) {
    const auto s = cfg.schedule(e);
    json row;
    row["epsilon"] = e;
    row["delta"] = s.delta;
    row["theta"] = s.theta;
    row["ell_class"] = to_string(s.ell_class);
    row["ell"] = s.ell_class == EllClass::infinite ? json("inf") : json(s.ell);
    row["beta"] = s.beta;
    sched.push_back(row);
  }
  j["schedules"] = sched;
  return j;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opts) {
  if (opts.write_files) fs::create_directories(cfg.output);
  Context ctx(cfg, opts.write_files, opts.log);
  PipelineResult result;
  for (const auto& [name, fn] : registry()) {
    if (std::find(cfg.checks.begin(), cfg.checks.end(), name) == cfg.checks.end()) continue;
    CheckResult res;
    res.name = name;
    ctx.log("[" + name + "]");
    try {
      fn(ctx, res);
    } catch (const std::exception& e) {
      res.error = e.what();
      ctx.log(std::string("  error: ") + e.what());
    }
    res.passed = res.error.empty() &&
                 std::all_of(res.metrics.begin(), res.metrics.end(), [](const Metric& m) { return m.passed; });
    for (const auto& m : res.metrics) {
      if (m.asserted && !m.passed) {
        ctx.log("  FAILED " + m.name + " = " + fmt(m.value) + " (" + m.comparison + " " + fmt(m.tolerance.value_or(0)) +
                ")");
      }
    }
    ctx.log(std::string("  ") + (res.passed ? "PASS" : "FAIL"));
    result.passed = result.passed && res.passed;
    result.checks.push_back(std::move(res));
  }

  json report;
  report["tool"] = "twoscale";
  report["version"] = kToolVersion;
  report["timestamp"] = utc_timestamp();
  report["config"] = config_json(cfg);
  json checks = json::array();
  for (const auto& c : result.checks) {
    json j;
    j["name"] = c.name;
    j["passed"] = c.passed;
    if (!c.error.empty()) j["error"] = c.error;
    json metrics = json::array();
    for (const auto& m : c.metrics) metrics.push_back(metric_json(m));
    j["metrics"] = metrics;
    j["notes"] = c.notes;
    j["artifacts"] = c.artifacts;
    checks.push_back(j);
  }
  report["checks"] = checks;
  report["passed"] = result.passed;
  report["failed_checks"] = result.failed_checks();
  result.report = report;

  if (opts.write_files) {
    std::ofstream(fs::path(cfg.output) / "report.json") << report.dump(2) << '\n';
    json manifest;
    manifest["tool"] = "twoscale";
    manifest["version"] = kToolVersion;
    manifest["timestamp"] = report["timestamp"];
    manifest["compiler"] = __VERSION__;
    manifest["cxx_standard"] = static_cast<long>(__cplusplus);
    manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);
    manifest["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    manifest["rng"] = "philox4x32-10, stream = (master seed, purpose, index)";
    manifest["threads"] = thread_count();
    manifest["config"] = cfg.source_path;
    manifest["master_seed"] = cfg.seed;
    json seeds;
    for (const auto& c : cfg.checks) seeds[c] = check_seed(cfg.seed, c);
    manifest["check_seeds"] = seeds;
    json files = json::array({"report.json", "manifest.json"});
    for (const auto& c : result.checks) {
      for (const auto& a : c.artifacts) files.push_back(a);
    }
    manifest["files"] = files;
    std::ofstream(fs::path(cfg.output) / "manifest.json") << manifest.dump(2) << '\n';
  }
  return result;
}

void render_report(const json& report, std::ostream& os) {
  os << "twoscale report";
  if (report.contains("timestamp")) os << " (" << report["timestamp"].get<std::string>() << ")";
  os << '\n';
  if (report.contains("config")) {
    const auto& c = report["config"];
    os << "  config  : " << c.value("source", std::string("?")) << '\n';
    os << "  system  : " << c.value("system", std::string("?")) << ", regime " << c.value("regime", 0) << '\n';
    os << "  seed    : " << c.value("seed", std::uint64_t{0}) << '\n';
  }
  if (!report.contains("checks") || !report["checks"].is_array()) throw std::runtime_error("report has no checks array");
  for (const auto& c : report["checks"]) {
    os << '\n' << (c.value("passed", false) ? "[PASS] " : "[FAIL] ") << c.value("name", std::string("?")) << '\n';
    if (c.contains("error")) os << "  error: " << c["error"].get<std::string>() << '\n';
    for (const auto& m : c.value("metrics", json::array())) {
      std::ostringstream value;
      if (m["value"].is_number()) {
        value << std::setprecision(8) << m["value"].get<double>();
      } else {
        value << m["value"].dump();
      }
      os << "  " << std::left << std::setw(44) << m.value("name", std::string()) << std::setw(16) << value.str();
      if (m.value("asserted", false)) {
        std::ostringstream tol;
        tol << m.value("comparison", std::string()) << ' ';
        if (m["tolerance"].is_number()) tol << std::setprecision(6) << m["tolerance"].get<double>();
        os << std::setw(18) << tol.str() << (m.value("passed", false) ? "ok" : "FAILED");
      } else if (m.contains("target") && m["target"].is_number()) {
        os << "target " << std::setprecision(8) << m["target"].get<double>();
      }
      os << '\n';
    }
    for (const auto& n : c.value("notes", json::array())) os << "  note: " << n.get<std::string>() << '\n';
  }
  os << '\n' << (report.value("passed", false) ? "all checks passed" : "some checks failed") << '\n';
}

}  // namespace twoscale
