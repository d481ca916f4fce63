#include "twoscale/sv_example.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "twoscale/parallel.hpp"
#include "twoscale/schedule.hpp"

namespace twoscale {

MultiscaleSystem build_sv(const SVParams& params) {
  if (!(std::abs(params.rho) <= 1.0)) {
    std::ostringstream os;
    os << "rho must lie in [-1, 1], got " << params.rho;
    throw std::invalid_argument(os.str());
  }
  if (!(params.gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (!params.sigma_fn || !params.c_fn) throw std::invalid_argument("sigma and c must be set");
  const double m = params.m;
  MultiscaleSystem sys;
  sys.name = "sv-example";
  auto sigma = params.sigma_fn;
  auto c = params.c_fn;
  sys.c = scalar_field([c](double x, double y) { return c(x, y); });
  sys.sigma = scalar_field([sigma](double, double y) { return sigma(y); });
  sys.f = scalar_field([m](double, double y) { return m - y; });
  sys.tau1 = constant_field({params.rho});
  sys.tau2 = constant_field({std::sqrt(std::max(0.0, 1.0 - params.rho * params.rho))});
  return sys;
}

GaussHermite gauss_hermite(std::size_t n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const double b = std::sqrt(0.5 * static_cast<double>(k));
    J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
    J(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  GaussHermite gh;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = eig.eigenvectors()(0, static_cast<Eigen::Index>(i));
    gh.nodes.push_back(eig.eigenvalues()(static_cast<Eigen::Index>(i)));
    gh.weights.push_back(std::sqrt(std::numbers::pi) * v * v);
  }
  return gh;
}

double gaussian_expectation(const std::function<double(double)>& h, double m, std::size_t n) {
  const GaussHermite gh = gauss_hermite(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += gh.weights[i] * h(m + gh.nodes[i]);
  return s / std::sqrt(std::numbers::pi);
}

namespace {

void require_y2(const SVParams& p) {
  if (!p.c_is_y2) throw std::logic_error("closed form requires the c = y^2 preset");
}

}  // namespace

double phi2_closed_form(double y, const SVParams& p) {
  require_y2(p);
  return (0.5 * y * y + p.m * y - 0.25 - 1.5 * p.m * p.m) / p.gamma;
}

double phi2_closed_form_derivative(double y, const SVParams& p) {
  require_y2(p);
  return (y + p.m) / p.gamma;
}

double cbar_closed_form(const SVParams& p) {
  require_y2(p);
  return 0.5 + p.m * p.m;
}

double q_closed_form(const SVParams& p) {
  return gaussian_expectation([&](double y) { return p.sigma_fn(y) * p.sigma_fn(y); }, p.m);
}

double qbar2_closed_form(const SVParams& p) {
  require_y2(p);
  const double m = p.m, g = p.gamma;
  // int sigma(y)(y+m) e^{-(y-m)^2} dy = sqrt(pi) E_mu[sigma(y)(y+m)]
  const double cross = std::sqrt(std::numbers::pi) *
                       gaussian_expectation([&](double y) { return p.sigma_fn(y) * (y + m); }, m);
  return q_closed_form(p) + (4.0 * m * m + 0.5) / (g * g) + 2.0 * p.rho / (g * std::sqrt(std::numbers::pi)) * cross;
}

double ldp_rate(double x1, const LDPRate& rate) {
  if (!(rate.q > 0.0)) throw std::invalid_argument("ldp_rate: q must be positive");
  return (x1 - rate.x0) * (x1 - rate.x0) / (2.0 * rate.q);
}

TailEstimate short_time_tail(const SVParams& params, double nu, double t, std::size_t n_paths, std::uint64_t seed,
                             const TailOptions& opts) {
  if (!(t > 0.0) || t > 1e-2) throw std::invalid_argument("short_time_tail: t must lie in (0, 1e-2]");
  if (n_paths == 0) throw std::invalid_argument("short_time_tail: need at least one path");
  SVParams scaled = params;
  auto c = params.c_fn;
  // Physical drift c, so the rescaled slow drift is t c and vanishes with t.
  scaled.c_fn = [c, t](double x, double y) { return t * c(x, y); };
  const MultiscaleSystem sys = build_sv(scaled);
  const double eps = t;
  const double delta = t * t;
  const ScaleSchedule sched = fixed_schedule(eps, delta, Regime::regime1);

  SimulationOptions sim;
  sim.scheme = FastScheme::exponential;
  const std::vector<double> x0{params.x0};
  const std::vector<double> y0{params.initial_fast()};
  const double level = params.x0 + nu * std::sqrt(t);
  std::vector<double> hit(n_paths, 0.0);
  parallel_for(n_paths, [&](std::size_t p) {
    SimulationOptions o = sim;
    o.path_index = p;
    double terminal = 0.0;
    integrate_path(sys, sched, x0, y0, 1.0, opts.dt, seed, o,
                   [&](std::size_t, double, std::span<const double> x, std::span<const double>) { terminal = x[0]; });
    hit[p] = terminal >= level ? 1.0 : 0.0;
  });

  TailEstimate est;
  est.nu = nu;
  est.t = t;
  est.n_paths = n_paths;
  const double count = pairwise_sum(hit);
  est.exceedances = static_cast<std::size_t>(count);
  if (est.exceedances < opts.min_exceedances) {
    std::ostringstream os;
    os << "tail probability below Monte Carlo resolution: " << est.exceedances << " exceedances (need "
       << opts.min_exceedances << "); increase the path count or lower nu";
    throw std::runtime_error(os.str());
  }
  const double n = static_cast<double>(n_paths);
  est.probability = count / n;
  est.std_error = std::sqrt(est.probability * (1.0 - est.probability) / n);
  const double q = q_closed_form(params);
  est.predicted_log = -nu * nu / (2.0 * q);
  est.predicted = std::exp(est.predicted_log);
  est.log_probability = std::log(est.probability);
  est.relative_log_error = est.predicted_log == 0.0
                               ? std::abs(est.log_probability)
                               : std::abs(est.log_probability - est.predicted_log) / std::abs(est.predicted_log);
  return est;
}

}  // namespace twoscale
