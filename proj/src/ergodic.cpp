#include "twoscale/ergodic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

namespace quadrature {

std::vector<double> derivative(std::span<const double> v, double h) {
  const std::size_t n = v.size();
  std::vector<double> d(n, 0.0);
  if (n < 5) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = i == 0 ? 0 : i - 1;
      const std::size_t b = i + 1 == n ? i : i + 1;
      d[i] = b > a ? (v[b] - v[a]) / (static_cast<double>(b - a) * h) : 0.0;
    }
    return d;
  }
  for (std::size_t i = 2; i + 2 < n; ++i) {
    d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
  }
  // One-sided fourth-order stencils at the two points nearest each end.
  d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
  d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h);
  d[n - 1] = (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4] + 3.0 * v[n - 5]) / (12.0 * h);
  d[n - 2] = (3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5]) / (12.0 * h);
  return d;
}

std::vector<double> cumulative(std::span<const double> v, std::span<const double> dv, double h) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 1; i < v.size(); ++i) {
    out[i] = out[i - 1] + 0.5 * h * (v[i - 1] + v[i]) + h * h / 12.0 * (dv[i - 1] - dv[i]);
  }
  return out;
}

std::vector<double> cumulative_from_right(std::span<const double> v, std::span<const double> dv, double h) {
  const std::size_t n = v.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = n - 1; i-- > 0;) {
    out[i] = out[i + 1] + 0.5 * h * (v[i] + v[i + 1]) + h * h / 12.0 * (dv[i] - dv[i + 1]);
  }
  return out;
}

double trapezoid(std::span<const double> v, double h) {
  if (v.size() < 2) return 0.0;
  std::vector<double> interior(v.begin() + 1, v.end() - 1);
  return h * (pairwise_sum(interior) + 0.5 * (v.front() + v.back()));
}

}  // namespace quadrature

FrozenGenerator frozen_generator(const MultiscaleSystem& sys, Regime regime, double gamma,
                                 std::span<const double> x) {
  sys.check_shape();
  if (x.size() != sys.slow_dim) throw std::invalid_argument("frozen_generator: slow point dimension mismatch");
  if (regime == Regime::regime2 && !(gamma > 0.0)) throw std::invalid_argument("regime 2 generator needs gamma > 0");
  FrozenGenerator gen;
  gen.regime = regime;
  gen.gamma = regime == Regime::regime2 ? gamma : 1.0;
  gen.x.assign(x.begin(), x.end());
  gen.fast_dim = sys.fast_dim;
  const std::size_t n = sys.fast_dim;
  auto held = std::make_shared<const MultiscaleSystem>(sys);
  if (regime == Regime::regime1) {
    gen.drift = [sys = held, xs = gen.x](std::span<const double> y, std::span<double> out) { sys->eval_f(xs, y, out); };
    gen.diffusion = [sys = held, xs = gen.x](std::span<const double> y, std::span<double> out) {
      const auto a = sys->fast_diffusion(xs, y);
      std::copy(a.begin(), a.end(), out.begin());
    };
  } else {
    gen.drift = [sys = held, xs = gen.x, gamma, n](std::span<const double> y, std::span<double> out) {
      std::vector<double> gv(n);
      sys->eval_f(xs, y, out);
      sys->eval_g(xs, y, gv);
      for (std::size_t i = 0; i < n; ++i) out[i] = gamma * out[i] + gv[i];
    };
    gen.diffusion = [sys = held, xs = gen.x, gamma](std::span<const double> y, std::span<double> out) {
      const auto a = sys->fast_diffusion(xs, y);
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = gamma * a[i];
    };
  }
  return gen;
}

double InvariantMeasure1D::integrate(std::span<const double> values) const {
  std::vector<double> w(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) w[i] = values[i] * density[i];
  return quadrature::trapezoid(w, spacing);
}

double InvariantMeasure1D::mass() const { return quadrature::trapezoid(density, spacing); }

namespace {

struct DensityAttempt {
  InvariantMeasure1D mu;
  double tail_lo = 0.0;
  double tail_hi = 0.0;
};

DensityAttempt density_on(const FrozenGenerator& gen, double lo, std::size_t n, double h) {
  DensityAttempt out;
  auto& mu = out.mu;
  mu.spacing = h;
  mu.grid.resize(n);
  mu.drift.resize(n);
  mu.diffusion.resize(n);
  std::vector<double> ratio(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = lo + h * static_cast<double>(i);
    mu.grid[i] = y;
    gen.drift(std::span<const double>(&y, 1), std::span<double>(&mu.drift[i], 1));
    gen.diffusion(std::span<const double>(&y, 1), std::span<double>(&mu.diffusion[i], 1));
    if (!std::isfinite(mu.drift[i]) || !std::isfinite(mu.diffusion[i])) {
      throw std::runtime_error("invariant_density_1d: generator coefficients not finite on grid");
    }
    if (!(mu.diffusion[i] > 0.0)) {
      throw std::runtime_error("invariant_density_1d: diffusion vanishes on the grid");
    }
    ratio[i] = 2.0 * mu.drift[i] / mu.diffusion[i];
  }
  const auto potential = quadrature::cumulative(ratio, quadrature::derivative(ratio, h), h);
  std::vector<double> log_p(n);
  for (std::size_t i = 0; i < n; ++i) log_p[i] = potential[i] - std::log(mu.diffusion[i]);
  const double peak = *std::max_element(log_p.begin(), log_p.end());
  mu.density.resize(n);
  for (std::size_t i = 0; i < n; ++i) mu.density[i] = std::exp(log_p[i] - peak);
  const double total = quadrature::trapezoid(mu.density, h);

  // Tail beyond an edge ~ p_edge / |d log p/dy| when the drift points inward.
  auto tail = [&](std::size_t i, double outward) {
    const double inward_rate = -ratio[i] * outward;
    if (!(inward_rate > 0.0)) return std::numeric_limits<double>::infinity();
    return mu.density[i] / inward_rate;
  };
  out.tail_lo = tail(0, -1.0) / total;
  out.tail_hi = tail(n - 1, 1.0) / total;
  for (double& p : mu.density) p /= total;
  mu.truncation_mass_bound = out.tail_lo + out.tail_hi;
  return out;
}

}  // namespace

InvariantMeasure1D invariant_density_1d(const FrozenGenerator& gen, Domain domain, std::size_t n_grid,
                                        const DensityOptions& opts) {
  if (gen.fast_dim != 1) throw std::invalid_argument("invariant_density_1d: fast dimension must be 1");
  if (!(domain.hi > domain.lo) || n_grid < 5) throw std::invalid_argument("invariant_density_1d: bad grid");
  const double h = (domain.hi - domain.lo) / static_cast<double>(n_grid - 1);
  double lo = domain.lo;
  std::size_t n = n_grid;

  DensityAttempt attempt = density_on(gen, lo, n, h);
  std::size_t expansions = 0;
  while (opts.expand && attempt.mu.truncation_mass_bound > opts.tail_tolerance) {
    if (expansions++ == opts.max_expansions) {
      std::ostringstream os;
      os << "invariant density is not integrable: tail mass bound " << attempt.mu.truncation_mass_bound
         << " after " << opts.max_expansions << " domain expansions";
      throw NonIntegrableDensity(os.str());
    }
    const std::size_t grow = (n - 1) / 2;
    const double half = opts.tail_tolerance / 2.0;
    if (attempt.tail_lo > half) {
      lo -= h * static_cast<double>(grow);
      n += grow;
    }
    if (attempt.tail_hi > half) n += grow;
    attempt = density_on(gen, lo, n, h);
  }

  InvariantMeasure1D mu = std::move(attempt.mu);
  const std::size_t size = mu.size();
  std::vector<double> l_y(size), l_y2(size), l_sin(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double y = mu.grid[i], b = mu.drift[i], a = mu.diffusion[i];
    l_y[i] = b;
    l_y2[i] = 2.0 * y * b + a;
    l_sin[i] = b * std::cos(y) - 0.5 * a * std::sin(y);
  }
  mu.stationarity_residual["y"] = mu.integrate(l_y);
  mu.stationarity_residual["y^2"] = mu.integrate(l_y2);
  mu.stationarity_residual["sin y"] = mu.integrate(l_sin);
  return mu;
}

std::vector<double> average(const VectorField& fn, std::size_t out_dim, const InvariantMeasure1D& mu,
                            std::span<const double> x) {
  std::vector<std::vector<double>> columns(out_dim, std::vector<double>(mu.size()));
  std::vector<double> v(out_dim);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    fn(x, std::span<const double>(&mu.grid[i], 1), v);
    for (std::size_t k = 0; k < out_dim; ++k) {
      if (!std::isfinite(v[k])) {
        std::ostringstream os;
        os << "average: integrand not finite at y = " << mu.grid[i];
        throw std::runtime_error(os.str());
      }
      columns[k][i] = v[k];
    }
  }
  std::vector<double> out(out_dim);
  for (std::size_t k = 0; k < out_dim; ++k) out[k] = mu.integrate(columns[k]);
  return out;
}

std::pair<double, double> InvariantSample::mean_of(const std::function<double(std::span<const double>)>& fn) const {
  const std::size_t n = count();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = fn(std::span<const double>(values.data() + i * fast_dim, fast_dim));
  const double mean = pairwise_sum(v) / static_cast<double>(n);
  for (double& a : v) a = (a - mean) * (a - mean);
  const double var = pairwise_sum(v) / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

InvariantSample sample_invariant_mc(const FrozenGenerator& gen, double burn_in, std::size_t n_samples,
                                    std::uint64_t seed, const SamplerOptions& opts) {
  const std::size_t n = gen.fast_dim;
  if (n_samples < 2 || !(burn_in > 0.0)) throw std::invalid_argument("sample_invariant_mc: bad sizes");
  std::vector<double> y_init = opts.y_init.empty() ? std::vector<double>(n, 0.0) : opts.y_init;
  if (y_init.size() != n) throw std::invalid_argument("sample_invariant_mc: y_init dimension mismatch");

  double dt = opts.dt;
  if (!(dt > 0.0)) {
    std::vector<double> d0(n), dp(n), dm(n), a(n * n), yp = y_init;
    gen.diffusion(y_init, a);
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < n; ++j) {
      const double hy = 1e-5 * (1.0 + std::abs(y_init[j]));
      yp = y_init;
      yp[j] += hy;
      gen.drift(yp, dp);
      yp[j] -= 2.0 * hy;
      gen.drift(yp, dm);
      for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(dp[i] - dm[i]) / (2.0 * hy));
    }
    dt = 0.01 / scale;
  }
  const std::size_t steps = step_count(burn_in, dt);
  const double h = burn_in / static_cast<double>(steps);
  const double sqrt_h = std::sqrt(h);

  InvariantSample out;
  out.fast_dim = n;
  out.dt = h;
  out.burn_in = burn_in;
  out.values.resize(n_samples * n);

  parallel_for(n_samples, [&](std::size_t path) {
    RandomStream rng(seed, path, StreamPurpose::frozen_fast);
    std::vector<double> y = y_init, drift(n), a(n * n), xi(n);
    for (std::size_t s = 0; s < steps; ++s) {
      gen.drift(y, drift);
      gen.diffusion(y, a);
      rng.fill_normal(xi, sqrt_h);
      if (n == 1) {
        y[0] += h * drift[0] + std::sqrt(a[0]) * xi[0];
      } else {
        Eigen::Map<const Eigen::MatrixXd> A(a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(A).matrixL();
        Eigen::Map<const Eigen::VectorXd> z(xi.data(), static_cast<Eigen::Index>(n));
        const Eigen::VectorXd dy = L * z;
        for (std::size_t i = 0; i < n; ++i) y[i] += h * drift[i] + dy(static_cast<Eigen::Index>(i));
      }
      for (double v : y) {
        if (!(std::abs(v) < 1e12)) {
          throw SimulationBlowup("frozen fast process exploded during burn-in", h * static_cast<double>(s + 1));
        }
      }
    }
    std::copy(y.begin(), y.end(), out.values.begin() + static_cast<std::ptrdiff_t>(path * n));
  });
  return out;
}

void write_density_csv(const InvariantMeasure1D& mu, std::ostream& os) {
  os << "y,density\n";
  os.precision(17);
  for (std::size_t i = 0; i < mu.size(); ++i) os << mu.grid[i] << ',' << mu.density[i] << '\n';
}

}  // namespace twoscale
