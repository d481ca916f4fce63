#include "twoscale/homogenize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace twoscale {

namespace {

constexpr std::size_t kCacheLimit = 64;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_one_fast_dim(const MultiscaleSystem& sys) {
  if (sys.fast_dim != 1) {
    throw std::invalid_argument("quadrature homogenization needs fast_dim = 1; use the Monte Carlo solvers beyond");
  }
}

}  // namespace

LambdaTable build_lambda(const MultiscaleSystem& sys, Regime regime, double gamma, const InvariantMeasure1D& mu,
                         std::span<const double> x, const CellSolution* chi) {
  require_one_fast_dim(sys);
  const std::size_t m = sys.slow_dim;
  const std::size_t n = mu.size();
  if (regime == Regime::regime1 && chi == nullptr) {
    throw std::invalid_argument("build_lambda: regime 1 needs the cell solution chi");
  }
  if (regime == Regime::regime2 && !(gamma > 0.0)) throw std::invalid_argument("build_lambda: regime 2 needs gamma > 0");

  LambdaTable out;
  out.values.assign(m, std::vector<double>(n));
  std::vector<double> c(m), b(m), g(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> y(&mu.grid[i], 1);
    sys.eval_c(x, y, c);
    if (regime == Regime::regime1) {
      sys.eval_g(x, y, g);
      for (std::size_t k = 0; k < m; ++k) out.values[k][i] = c[k] + chi->d_dy[k][i] * g[0];
    } else {
      sys.eval_b(x, y, b);
      for (std::size_t k = 0; k < m; ++k) out.values[k][i] = gamma * b[k] + c[k];
    }
  }
  const double mass = mu.mass();
  for (std::size_t k = 0; k < m; ++k) {
    for (double v : out.values[k]) {
      if (!std::isfinite(v)) throw std::runtime_error("build_lambda: non-finite lambda on the grid");
    }
    out.bar.push_back(mu.integrate(out.values[k]) / mass);
  }
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> centered(out.values[k]);
    for (double& v : centered) v -= out.bar[k];
    out.centering_residual = std::max(out.centering_residual, std::abs(mu.integrate(centered)));
  }
  return out;
}

std::vector<double> psd_sqrt(std::span<const double> matrix, std::size_t m, double tolerance, double* min_eigenvalue) {
  Eigen::Map<const RowMatrix> A(matrix.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  const RowMatrix S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<RowMatrix> eig(S);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  if (min_eigenvalue != nullptr) *min_eigenvalue = lo;
  const double scale = std::max(1.0, std::abs(ev.maxCoeff()));
  if (lo < -tolerance * scale) {
    std::ostringstream os;
    os << "matrix is not positive semidefinite (smallest eigenvalue " << lo << ")";
    throw std::runtime_error(os.str());
  }
  const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
  const RowMatrix R = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  return std::vector<double>(R.data(), R.data() + m * m);
}

FluctuationCoefficients build_J_q(const MultiscaleSystem& sys, Regime regime, double gamma,
                                  const InvariantMeasure1D& mu, std::span<const double> x, const CellSolution* chi,
                                  const CellSolution& phi, const LambdaTable& lambda) {
  require_one_fast_dim(sys);
  const std::size_t m = sys.slow_dim;
  const std::size_t kappa = sys.noise_dim;
  const std::size_t n = mu.size();
  if (regime == Regime::regime1 && chi == nullptr) throw std::invalid_argument("build_J_q: regime 1 needs chi");
  if (phi.components() != m || phi.grid.size() != n) throw std::invalid_argument("build_J_q: corrector shape mismatch");

  // Gradient used inside q: chi' in regime 1, phi' in regime 2.
  const CellSolution& grad_source = regime == Regime::regime1 ? *chi : phi;

  FluctuationCoefficients out;
  out.J.assign(m, std::vector<double>(n));
  out.q.assign(n, std::vector<double>(m * m));
  std::vector<double> b(m), g(1), sigma(m * kappa), tau1(kappa), tau2(kappa);
  RowMatrix A(m, kappa), B(m, kappa);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> y(&mu.grid[i], 1);
    sys.eval_g(x, y, g);
    sys.eval_sigma(x, y, sigma);
    sys.eval_tau1(x, y, tau1);
    sys.eval_tau2(x, y, tau2);
    if (regime == Regime::regime1) {
      for (std::size_t k = 0; k < m; ++k) out.J[k][i] = phi.d_dy[k][i] * g[0];
    } else {
      sys.eval_b(x, y, b);
      for (std::size_t k = 0; k < m; ++k) {
        out.J[k][i] = b[k] - (lambda.values[k][i] - lambda.bar[k] + phi.d_dy[k][i] * g[0]) / gamma;
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double grad = grad_source.d_dy[k][i];
      for (std::size_t j = 0; j < kappa; ++j) {
        A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = sigma[k * kappa + j] + grad * tau1[j];
        B(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = grad * tau2[j];
      }
    }
    const RowMatrix Q = A * A.transpose() + B * B.transpose();
    std::copy(Q.data(), Q.data() + m * m, out.q[i].begin());
  }

  const double mass = mu.mass();
  for (std::size_t k = 0; k < m; ++k) out.J_bar.push_back(mu.integrate(out.J[k]) / mass);
  out.q_bar.assign(m * m, 0.0);
  std::vector<double> column(n);
  for (std::size_t e = 0; e < m * m; ++e) {
    for (std::size_t i = 0; i < n; ++i) column[i] = out.q[i][e];
    out.q_bar[e] = mu.integrate(column) / mass;
  }
  out.q_bar_sqrt = psd_sqrt(out.q_bar, m, kPsdTolerance, &out.min_eigenvalue);
  return out;
}

// ---------------------------------------------------------------- model

HomogenizedModel::HomogenizedModel(MultiscaleSystem sys, Regime regime, double gamma, HomogenizeOptions opts)
    : sys_(std::move(sys)), regime_(regime), gamma_(gamma), opts_(opts) {
  sys_.check_shape();
  require_one_fast_dim(sys_);
  if (regime_ == Regime::regime2 && !(gamma_ > 0.0)) throw std::invalid_argument("regime 2 needs gamma > 0");
  if (regime_ == Regime::regime1) gamma_ = 1.0;
}

std::shared_ptr<const FrozenPoint> HomogenizedModel::compute(std::span<const double> x) const {
  auto point = std::make_shared<FrozenPoint>();
  point->x.assign(x.begin(), x.end());
  const FrozenGenerator gen = frozen_generator(sys_, regime_, gamma_, x);
  point->mu = invariant_density_1d(gen, opts_.domain, opts_.n_grid, opts_.density);
  const CellSolution* chi = nullptr;
  if (regime_ == Regime::regime1) {
    point->chi = std::make_shared<const CellSolution>(chi_solution(sys_, point->mu, x));
    chi = point->chi.get();
  }
  point->lambda = build_lambda(sys_, regime_, gamma_, point->mu, x, chi);
  std::vector<std::vector<double>> rhs(point->lambda.values);
  for (std::size_t k = 0; k < rhs.size(); ++k) {
    for (double& v : rhs[k]) v -= point->lambda.bar[k];
  }
  point->phi = solve_cell_1d(gen, rhs, point->mu);
  point->coeffs = build_J_q(sys_, regime_, gamma_, point->mu, x, chi, point->phi, point->lambda);
  return point;
}

std::shared_ptr<const FrozenPoint> HomogenizedModel::at(std::span<const double> x) const {
  if (x.size() != sys_.slow_dim) throw std::invalid_argument("HomogenizedModel: slow point has wrong dimension");
  std::vector<double> key(x.begin(), x.end());
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto point = compute(x);
  std::lock_guard lock(mutex_);
  if (cache_.size() >= kCacheLimit) cache_.clear();
  cache_.emplace(std::move(key), point);
  return point;
}

std::size_t HomogenizedModel::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::vector<double> HomogenizedModel::lambda(std::span<const double> x, double y) const {
  const std::size_t m = sys_.slow_dim;
  std::vector<double> out(m), b(m), g(1);
  std::span<const double> ys(&y, 1);
  sys_.eval_c(x, ys, out);
  if (regime_ == Regime::regime1) {
    const auto point = at(x);
    sys_.eval_g(x, ys, g);
    for (std::size_t k = 0; k < m; ++k) out[k] += point->chi->derivative(k, y) * g[0];
  } else {
    sys_.eval_b(x, ys, b);
    for (std::size_t k = 0; k < m; ++k) out[k] += gamma_ * b[k];
  }
  return out;
}

std::vector<double> HomogenizedModel::lambda_bar(std::span<const double> x) const { return at(x)->lambda.bar; }

std::vector<double> HomogenizedModel::D_lambda_bar(std::span<const double> x) const {
  return jacobian([this](std::span<const double> p) { return lambda_bar(p); }, x);
}

std::vector<double> HomogenizedModel::J(std::span<const double> x, double y) const {
  const auto point = at(x);
  const std::size_t m = sys_.slow_dim;
  std::vector<double> out(m), b(m), g(1);
  std::span<const double> ys(&y, 1);
  sys_.eval_g(x, ys, g);
  if (regime_ == Regime::regime1) {
    for (std::size_t k = 0; k < m; ++k) out[k] = point->phi.derivative(k, y) * g[0];
  } else {
    sys_.eval_b(x, ys, b);
    const auto lam = lambda(x, y);
    for (std::size_t k = 0; k < m; ++k) {
      out[k] = b[k] - (lam[k] - point->lambda.bar[k] + point->phi.derivative(k, y) * g[0]) / gamma_;
    }
  }
  return out;
}

std::vector<double> HomogenizedModel::q(std::span<const double> x, double y) const {
  const auto point = at(x);
  const std::size_t m = sys_.slow_dim, kappa = sys_.noise_dim;
  std::span<const double> ys(&y, 1);
  std::vector<double> sigma(m * kappa), tau1(kappa), tau2(kappa);
  sys_.eval_sigma(x, ys, sigma);
  sys_.eval_tau1(x, ys, tau1);
  sys_.eval_tau2(x, ys, tau2);
  const CellSolution& src = regime_ == Regime::regime1 ? *point->chi : point->phi;
  RowMatrix A(m, kappa), B(m, kappa);
  for (std::size_t k = 0; k < m; ++k) {
    const double grad = src.derivative(k, y);
    for (std::size_t j = 0; j < kappa; ++j) {
      A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = sigma[k * kappa + j] + grad * tau1[j];
      B(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = grad * tau2[j];
    }
  }
  const RowMatrix Q = A * A.transpose() + B * B.transpose();
  return std::vector<double>(Q.data(), Q.data() + m * m);
}

std::vector<double> HomogenizedModel::J_bar(std::span<const double> x) const { return at(x)->coeffs.J_bar; }
std::vector<double> HomogenizedModel::q_bar(std::span<const double> x) const { return at(x)->coeffs.q_bar; }
std::vector<double> HomogenizedModel::q_bar_sqrt(std::span<const double> x) const {
  return at(x)->coeffs.q_bar_sqrt;
}

// ---------------------------------------------------------------- jacobian / orbit

std::vector<double> jacobian(const DriftFunction& fn, std::span<const double> x) {
  const std::size_t m = x.size();
  std::vector<double> out(m * m);
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t j = 0; j < m; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + h;
    const auto up = fn(xp);
    xp[j] = x[j] - h;
    const auto dn = fn(xp);
    xp[j] = x[j];
    if (up.size() != m || dn.size() != m) throw std::invalid_argument("jacobian: drift has wrong dimension");
    for (std::size_t i = 0; i < m; ++i) out[i * m + j] = (up[i] - dn[i]) / (2.0 * h);
  }
  return out;
}

std::vector<double> jacobian_lambda_bar(const HomogenizedModel& model, std::span<const double> x) {
  return model.D_lambda_bar(x);
}

std::vector<double> LimitOrbit::state_at(double t) const {
  std::vector<double> out(slow_dim);
  state_at(t, out);
  return out;
}

void LimitOrbit::state_at(double t, std::span<double> out) const {
  const std::size_t n = times.size();
  if (n == 1) {
    std::copy(states.begin(), states.begin() + static_cast<std::ptrdiff_t>(slow_dim), out.begin());
    return;
  }
  t = std::clamp(t, times.front(), times.back());
  auto i = static_cast<std::size_t>(std::floor((t - times.front()) / step));
  i = std::min(i, n - 2);
  const double s = std::clamp((t - times[i]) / step, 0.0, 1.0);
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  for (std::size_t k = 0; k < slow_dim; ++k) {
    out[k] = h00 * states[i * slow_dim + k] + h10 * step * rates[i * slow_dim + k] +
             h01 * states[(i + 1) * slow_dim + k] + h11 * step * rates[(i + 1) * slow_dim + k];
  }
}

namespace {

LimitOrbit rk4(const DriftFunction& drift, std::span<const double> x0, double T, std::size_t steps) {
  const std::size_t m = x0.size();
  const double h = T / static_cast<double>(steps);
  LimitOrbit orbit;
  orbit.slow_dim = m;
  orbit.step = h;
  orbit.x0.assign(x0.begin(), x0.end());
  orbit.times.reserve(steps + 1);
  orbit.states.reserve((steps + 1) * m);
  std::vector<double> x(x0.begin(), x0.end()), tmp(m);
  auto check = [&](const std::vector<double>& v, double t) {
    if (v.size() != m) throw std::invalid_argument("limit ODE: drift has wrong dimension");
    for (double e : v) {
      if (!std::isfinite(e) || std::abs(e) > 1e12) throw SimulationBlowup("limit orbit exploded", t);
    }
  };
  std::vector<double> k1 = drift(x);
  check(k1, 0.0);
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = h * static_cast<double>(s);
    orbit.times.push_back(t);
    orbit.states.insert(orbit.states.end(), x.begin(), x.end());
    orbit.rates.insert(orbit.rates.end(), k1.begin(), k1.end());
    if (s == steps) break;
    for (std::size_t k = 0; k < m; ++k) tmp[k] = x[k] + 0.5 * h * k1[k];
    const auto k2 = drift(tmp);
    for (std::size_t k = 0; k < m; ++k) tmp[k] = x[k] + 0.5 * h * k2[k];
    const auto k3 = drift(tmp);
    for (std::size_t k = 0; k < m; ++k) tmp[k] = x[k] + h * k3[k];
    const auto k4 = drift(tmp);
    for (std::size_t k = 0; k < m; ++k) x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    check(x, t + h);
    k1 = drift(x);
    check(k1, t + h);
  }
  return orbit;
}

}  // namespace

LimitOrbit solve_limit_ode(const DriftFunction& drift, std::span<const double> x0, double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) throw std::invalid_argument("solve_limit_ode: T and dt must be positive");
  const std::size_t steps = step_count(T, dt);
  LimitOrbit orbit = rk4(drift, x0, T, steps);
  const LimitOrbit fine = rk4(drift, x0, T, 2 * steps);
  const std::size_t m = orbit.slow_dim;
  for (std::size_t s = 0; s <= steps; ++s) {
    for (std::size_t k = 0; k < m; ++k) {
      const double d = std::abs(orbit.states[s * m + k] - fine.states[2 * s * m + k]);
      orbit.error_estimate = std::max(orbit.error_estimate, d * 16.0 / 15.0);
    }
  }
  // Local Lipschitz check on a sparse subset of nodes.
  const std::size_t stride = std::max<std::size_t>(1, steps / 16);
  for (std::size_t s = 0; s <= steps; s += stride) {
    const auto Jm = jacobian(drift, orbit.state(s));
    double norm = 0.0;
    for (double v : Jm) {
      if (!std::isfinite(v)) throw std::runtime_error("limit ODE drift is not locally Lipschitz along the orbit");
      norm = std::max(norm, std::abs(v));
    }
    orbit.max_jacobian_norm = std::max(orbit.max_jacobian_norm, norm);
  }
  return orbit;
}

LimitOrbit solve_limit_ode(const HomogenizedModel& model, std::span<const double> x0, double T, double dt) {
  return solve_limit_ode([&model](std::span<const double> x) { return model.lambda_bar(x); }, x0, T, dt);
}

void write_orbit_csv(const LimitOrbit& orbit, std::ostream& os) {
  os << 't';
  for (std::size_t k = 0; k < orbit.slow_dim; ++k) os << ",x" << (k + 1);
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < orbit.times.size(); ++i) {
    os << orbit.times[i];
    for (std::size_t k = 0; k < orbit.slow_dim; ++k) os << ',' << orbit.states[i * orbit.slow_dim + k];
    os << '\n';
  }
}

}  // namespace twoscale
