#include "twoscale/cell_poisson.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

namespace {

double hermite(double y0, double h, double t, double v0, double v1, double d0, double d1) {
  (void)y0;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * v0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * v1 + (t3 - t2) * h * d1;
}

std::size_t locate(const std::vector<double>& grid, double y, double& t) {
  const double h = grid[1] - grid[0];
  const double tolerance = 1e-9 * h;
  if (y < grid.front() - tolerance || y > grid.back() + tolerance) {
    std::ostringstream os;
    os << "cell solution queried at y = " << y << " outside [" << grid.front() << ", " << grid.back() << "]";
    throw std::out_of_range(os.str());
  }
  auto i = static_cast<std::size_t>(std::floor((y - grid.front()) / h));
  i = std::min(i, grid.size() - 2);
  t = std::clamp((y - grid[i]) / h, 0.0, 1.0);
  return i;
}

}  // namespace

double CellSolution::value(std::size_t k, double y) const {
  double t = 0.0;
  const std::size_t i = locate(grid, y, t);
  const double h = spacing();
  return hermite(grid[i], h, t, values[k][i], values[k][i + 1], d_dy[k][i], d_dy[k][i + 1]);
}

double CellSolution::derivative(std::size_t k, double y) const {
  double t = 0.0;
  const std::size_t i = locate(grid, y, t);
  const double h = spacing();
  return hermite(grid[i], h, t, d_dy[k][i], d_dy[k][i + 1], d2_dy2[k][i], d2_dy2[k][i + 1]);
}

double recenter(std::vector<double>& u, const InvariantMeasure1D& mu) {
  const double shift = mu.integrate(u) / mu.mass();
  for (double& v : u) v -= shift;
  return shift;
}

CellSolution solve_cell_1d(const FrozenGenerator& gen, std::span<const std::vector<double>> rhs,
                           const InvariantMeasure1D& mu) {
  if (gen.fast_dim != 1) throw std::invalid_argument("solve_cell_1d: fast dimension must be 1");
  const std::size_t n = mu.size();
  const double h = mu.spacing;

  CellSolution sol;
  sol.grid = mu.grid;
  sol.x = gen.x;

  // Split point for the running integral: below the median integrate from the
  // left, above it from the right.
  std::size_t split = 0;
  {
    const auto mass = quadrature::cumulative(mu.density, quadrature::derivative(mu.density, h), h);
    while (split + 1 < n && mass[split] < 0.5 * mass.back()) ++split;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(mu.density[i] > 0.0)) {
      std::ostringstream os;
      os << "invariant density vanishes numerically at y = " << mu.grid[i] << " inside the domain";
      throw std::runtime_error(os.str());
    }
  }

  for (const auto& g_raw : rhs) {
    if (g_raw.size() != n) throw std::invalid_argument("solve_cell_1d: right-hand side does not match the grid");
    std::vector<double> abs_g(n);
    for (std::size_t i = 0; i < n; ++i) abs_g[i] = std::abs(g_raw[i]);
    const double centering = mu.integrate(g_raw);
    const double scale = 1.0 + mu.integrate(abs_g);
    if (!(std::abs(centering) <= kCenteringTolerance * scale)) {
      std::ostringstream os;
      os << "centering condition violated: int G dmu = " << centering;
      throw CenteringError(os.str());
    }
    std::vector<double> g(g_raw);
    for (double& v : g) v -= centering;

    std::vector<double> weighted(n);
    for (std::size_t i = 0; i < n; ++i) weighted[i] = g[i] * mu.density[i];
    const auto dweighted = quadrature::derivative(weighted, h);
    const auto left = quadrature::cumulative(weighted, dweighted, h);
    const auto right = quadrature::cumulative_from_right(weighted, dweighted, h);

    std::vector<double> du(n), d2u(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double running = i <= split ? left[i] : -right[i];
      du[i] = -2.0 * running / (mu.diffusion[i] * mu.density[i]);
      d2u[i] = -2.0 * (g[i] + mu.drift[i] * du[i]) / mu.diffusion[i];
    }
    std::vector<double> u = quadrature::cumulative(du, d2u, h);
    recenter(u, mu);
    sol.centering_residual = std::max(sol.centering_residual, std::abs(mu.integrate(u)));

    // Residual with u'' from differencing u' (independent of d2u above).
    const auto d2u_fd = quadrature::derivative(du, h);
    for (std::size_t i = 2; i + 2 < n; ++i) {
      const double r = mu.drift[i] * du[i] + 0.5 * mu.diffusion[i] * d2u_fd[i] + g[i];
      sol.generator_residual = std::max(sol.generator_residual, std::abs(r) / (1.0 + std::abs(g[i])));
    }
    sol.growth_exponent_fit = std::max(sol.growth_exponent_fit, fit_growth(sol.grid, u).exponent);

    sol.values.push_back(std::move(u));
    sol.d_dy.push_back(std::move(du));
    sol.d2_dy2.push_back(std::move(d2u));
  }
  return sol;
}

CellSolution solve_cell_1d(const FrozenGenerator& gen, const VectorField& rhs, std::size_t components,
                           const InvariantMeasure1D& mu) {
  std::vector<std::vector<double>> columns(components, std::vector<double>(mu.size()));
  std::vector<double> v(components);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    rhs(gen.x, std::span<const double>(&mu.grid[i], 1), v);
    for (std::size_t k = 0; k < components; ++k) columns[k][i] = v[k];
  }
  return solve_cell_1d(gen, columns, mu);
}

void fill_x_derivatives(CellSolution& sol, const std::function<CellSolution(std::span<const double>)>& solve_at) {
  const std::size_t m = sol.x.size();
  const std::size_t K = sol.components();
  const std::size_t n = sol.grid.size();
  auto table = [&] {
    return std::vector<std::vector<std::vector<double>>>(K, std::vector<std::vector<double>>(m, std::vector<double>(n)));
  };
  sol.d_dx = table();
  sol.d2_dx2 = table();
  sol.d2_dxdy = table();

  for (std::size_t l = 0; l < m; ++l) {
    const double step = 1e-3 * (1.0 + std::abs(sol.x[l]));
    std::array<CellSolution, 4> stencil;  // x-2h, x-h, x+h, x+2h
    const std::array<double, 4> offsets{-2.0, -1.0, 1.0, 2.0};
    for (std::size_t s = 0; s < 4; ++s) {
      std::vector<double> xs = sol.x;
      xs[l] += offsets[s] * step;
      stencil[s] = solve_at(xs);
      if (stencil[s].grid.size() != n || stencil[s].components() != K) {
        throw std::runtime_error("fill_x_derivatives: stencil solution is on a different grid");
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double um2 = stencil[0].values[k][i], um1 = stencil[1].values[k][i];
        const double up1 = stencil[2].values[k][i], up2 = stencil[3].values[k][i];
        const double u0 = sol.values[k][i];
        sol.d_dx[k][l][i] = (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * step);
        sol.d2_dx2[k][l][i] = (-um2 + 16.0 * um1 - 30.0 * u0 + 16.0 * up1 - up2) / (12.0 * step * step);
        const double dm2 = stencil[0].d_dy[k][i], dm1 = stencil[1].d_dy[k][i];
        const double dp1 = stencil[2].d_dy[k][i], dp2 = stencil[3].d_dy[k][i];
        sol.d2_dxdy[k][l][i] = (dm2 - 8.0 * dm1 + 8.0 * dp1 - dp2) / (12.0 * step);
      }
    }
  }
}

McCellEstimate solve_cell_mc(const FrozenGenerator& gen, const std::function<double(std::span<const double>)>& rhs,
                             std::span<const std::vector<double>> y_points, double horizon, std::size_t n_paths,
                             std::uint64_t seed, const McCellOptions& opts) {
  const std::size_t n = gen.fast_dim;
  if (!(horizon > 0.0) || n_paths < 2) throw std::invalid_argument("solve_cell_mc: bad horizon or path count");

  double dt = opts.dt;
  if (!(dt > 0.0)) {
    const std::vector<double> y0 = y_points.empty() ? std::vector<double>(n, 0.0) : y_points.front();
    std::vector<double> a(n * n), dp(n), dm(n), yp;
    gen.diffusion(y0, a);
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < n; ++j) {
      const double hy = 1e-5 * (1.0 + std::abs(y0[j]));
      yp = y0;
      yp[j] += hy;
      gen.drift(yp, dp);
      yp[j] -= 2.0 * hy;
      gen.drift(yp, dm);
      for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(dp[i] - dm[i]) / (2.0 * hy));
    }
    dt = 0.005 / scale;
  }
  const std::size_t steps = step_count(horizon, dt);
  const double h = horizon / static_cast<double>(steps);
  const double sqrt_h = std::sqrt(h);
  const std::size_t tail_start = steps - steps / 10;

  const std::size_t points = y_points.size();
  std::vector<double> totals(points * n_paths), tails(points * n_paths);

  parallel_for(points * n_paths, [&](std::size_t job) {
    const std::size_t p = job / n_paths;
    if (y_points[p].size() != n) throw std::invalid_argument("solve_cell_mc: y point dimension mismatch");
    RandomStream rng(seed, job, StreamPurpose::frozen_fast);
    std::vector<double> y = y_points[p], drift(n), a(n * n), xi(n);
    double prev = rhs(y);
    double total = 0.0, tail = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      gen.drift(y, drift);
      gen.diffusion(y, a);
      rng.fill_normal(xi, sqrt_h);
      if (n == 1) {
        y[0] += h * drift[0] + std::sqrt(a[0]) * xi[0];
      } else {
        Eigen::Map<const Eigen::MatrixXd> A(a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(A).matrixL();
        const Eigen::VectorXd dy = L * Eigen::Map<const Eigen::VectorXd>(xi.data(), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) y[i] += h * drift[i] + dy(static_cast<Eigen::Index>(i));
      }
      if (!(std::abs(y[0]) < 1e12)) throw SimulationBlowup("Feynman-Kac path exploded", h * static_cast<double>(s + 1));
      const double next = rhs(y);
      const double piece = 0.5 * h * (prev + next);
      total += piece;
      if (s >= tail_start) tail += piece;
      prev = next;
    }
    totals[job] = total;
    tails[job] = tail;
  });

  McCellEstimate out;
  out.y_points.assign(y_points.begin(), y_points.end());
  out.horizon = horizon;
  out.dt = h;
  out.horizon_adequate = true;
  for (std::size_t p = 0; p < points; ++p) {
    std::span<const double> tot(totals.data() + p * n_paths, n_paths);
    std::span<const double> tl(tails.data() + p * n_paths, n_paths);
    const double mean = pairwise_sum(tot) / static_cast<double>(n_paths);
    const double tail_mean = pairwise_sum(tl) / static_cast<double>(n_paths);
    std::vector<double> sq(n_paths), tsq(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
      sq[i] = (tot[i] - mean) * (tot[i] - mean);
      tsq[i] = (tl[i] - tail_mean) * (tl[i] - tail_mean);
    }
    const double se = std::sqrt(pairwise_sum(sq) / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths));
    const double tail_se =
        std::sqrt(pairwise_sum(tsq) / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths));
    out.values.push_back(mean);
    out.std_errors.push_back(se);
    // Only a tail contribution that is statistically significant counts.
    const double significant_tail = std::max(0.0, std::abs(tail_mean) - 3.0 * tail_se);
    const double fraction = significant_tail / std::max({std::abs(mean), se, 1e-300});
    out.tail_fraction = std::max(out.tail_fraction, fraction);
  }
  out.horizon_adequate = out.tail_fraction < 0.01;
  return out;
}

CellSolution chi_solution(const MultiscaleSystem& sys, const InvariantMeasure1D& mu, std::span<const double> x) {
  const FrozenGenerator gen = frozen_generator(sys, Regime::regime1, 1.0, x);
  if (!sys.has_b()) {
    CellSolution sol;
    sol.grid = mu.grid;
    sol.x.assign(x.begin(), x.end());
    for (std::size_t k = 0; k < sys.slow_dim; ++k) {
      sol.values.emplace_back(mu.size(), 0.0);
      sol.d_dy.emplace_back(mu.size(), 0.0);
      sol.d2_dy2.emplace_back(mu.size(), 0.0);
    }
    return sol;
  }
  try {
    return solve_cell_1d(gen, sys.b, sys.slow_dim, mu);
  } catch (const CenteringError& e) {
    throw CenteringError(std::string("regime 1 requires int b dmu_1 = 0 (") + e.what() + ")");
  }
}

GrowthFit fit_growth(std::span<const double> grid, std::span<const double> values) {
  double R = 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    R = std::max(R, std::abs(grid[i]));
    peak = std::max(peak, std::abs(values[i]));
  }
  GrowthFit fit;
  if (!(R > 0.0) || peak < 1e-300) return fit;
  auto envelope = [&](double r) {
    double m = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(grid[i]) <= r) m = std::max(m, std::abs(values[i]));
    }
    return std::max(m, 1e-14 * peak);
  };
  const double m1 = envelope(0.25 * R), m2 = envelope(0.5 * R), m4 = envelope(R);
  fit.exponent = std::log2(m4 / m2);
  fit.inner_exponent = std::log2(m2 / m1);
  fit.super_polynomial =
      fit.exponent > 1.0 && fit.exponent - fit.inner_exponent > std::max(0.5, 0.25 * std::max(0.0, fit.inner_exponent));
  return fit;
}

GrowthReport validate_growth(const CellSolution& sol) {
  GrowthReport report;
  auto worst = [&](const std::string& name, const std::vector<const std::vector<double>*>& columns) {
    if (columns.empty()) return;
    GrowthFit combined;
    for (const auto* col : columns) {
      const GrowthFit f = fit_growth(sol.grid, *col);
      combined.exponent = std::max(combined.exponent, f.exponent);
      combined.inner_exponent = std::max(combined.inner_exponent, f.inner_exponent);
      combined.super_polynomial = combined.super_polynomial || f.super_polynomial;
    }
    report.super_polynomial = report.super_polynomial || combined.super_polynomial;
    report.fits[name] = combined;
  };
  std::vector<const std::vector<double>*> u, dx, dxx, dxy;
  for (const auto& c : sol.values) u.push_back(&c);
  for (const auto& c : sol.d_dx)
    for (const auto& l : c) dx.push_back(&l);
  for (const auto& c : sol.d2_dx2)
    for (const auto& l : c) dxx.push_back(&l);
  for (const auto& c : sol.d2_dxdy)
    for (const auto& l : c) dxy.push_back(&l);
  worst("u", u);
  worst("du/dx", dx);
  worst("d2u/dx2", dxx);
  worst("d2u/dxdy", dxy);
  return report;
}

void write_cell_csv(const CellSolution& sol, std::size_t component, std::ostream& os) {
  os << "y,u,du_dy\n";
  os.precision(17);
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    os << sol.grid[i] << ',' << sol.values[component][i] << ',' << sol.d_dy[component][i] << '\n';
  }
}

}  // namespace twoscale
