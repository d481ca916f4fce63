#include "twoscale/sde_core.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace twoscale {

namespace {

void zero(std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

// expm1(z)/z, continuous at 0.
double phi1(double z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z;
  return std::expm1(z) / z;
}

// phi1(2z) - phi1(z)^2: normalized conditional variance of the OU noise given dW.
double residual_factor(double z) {
  if (std::abs(z) < 1e-3) return z * z / 12.0 * (1.0 + z);
  const double p = phi1(z);
  return std::max(0.0, phi1(2.0 * z) - p * p);
}

}  // namespace

// ------------------------------------------------------------ MultiscaleSystem

void MultiscaleSystem::eval_b(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  if (!b) return zero(out);
  b(x, y, out);
}
void MultiscaleSystem::eval_c(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  c(x, y, out);
}
void MultiscaleSystem::eval_sigma(std::span<const double> x, std::span<const double> y,
                                  std::span<double> out) const {
  sigma(x, y, out);
}
void MultiscaleSystem::eval_f(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  f(x, y, out);
}
void MultiscaleSystem::eval_g(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  if (!g) return zero(out);
  g(x, y, out);
}
void MultiscaleSystem::eval_tau1(std::span<const double> x, std::span<const double> y,
                                 std::span<double> out) const {
  tau1(x, y, out);
}
void MultiscaleSystem::eval_tau2(std::span<const double> x, std::span<const double> y,
                                 std::span<double> out) const {
  tau2(x, y, out);
}

std::vector<double> MultiscaleSystem::fast_diffusion(std::span<const double> x, std::span<const double> y) const {
  std::vector<double> t1(fast_dim * noise_dim), t2(fast_dim * noise_dim);
  eval_tau1(x, y, t1);
  eval_tau2(x, y, t2);
  std::vector<double> a(fast_dim * fast_dim, 0.0);
  for (std::size_t i = 0; i < fast_dim; ++i) {
    for (std::size_t j = 0; j < fast_dim; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < noise_dim; ++k) {
        s += t1[i * noise_dim + k] * t1[j * noise_dim + k] + t2[i * noise_dim + k] * t2[j * noise_dim + k];
      }
      a[i * fast_dim + j] = s;
    }
  }
  return a;
}

void MultiscaleSystem::check_shape() const {
  if (slow_dim == 0 || fast_dim == 0 || noise_dim == 0) {
    throw std::invalid_argument("system '" + name + "': dimensions must be positive");
  }
  if (!c || !sigma || !f || !tau1 || !tau2) {
    throw std::invalid_argument("system '" + name + "': c, sigma, f, tau1 and tau2 are required");
  }
}

VectorField scalar_field(std::function<double(double, double)> fn) {
  return [fn = std::move(fn)](std::span<const double> x, std::span<const double> y, std::span<double> out) {
    out[0] = fn(x[0], y[0]);
  };
}

VectorField constant_field(std::vector<double> values) {
  return [values = std::move(values)](std::span<const double>, std::span<const double>, std::span<double> out) {
    std::copy(values.begin(), values.end(), out.begin());
  };
}

MultiscaleSystem rescale_short_time(const PhysicalSystem& physical, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rescale_short_time: epsilon must be positive");
  MultiscaleSystem sys;
  sys.name = physical.name.empty() ? "rescaled" : physical.name + " (rescaled)";
  sys.slow_dim = physical.slow_dim;
  sys.fast_dim = physical.fast_dim;
  sys.noise_dim = physical.noise_dim;
  sys.c = [c = physical.c, epsilon](std::span<const double> x, std::span<const double> y, std::span<double> out) {
    c(x, y, out);
    for (double& v : out) v *= epsilon;
  };
  sys.sigma = physical.sigma;
  sys.f = physical.f;
  sys.tau1 = physical.tau1;
  sys.tau2 = physical.tau2;
  return sys;
}

double probe_sup_difference(const VectorField& scaled, const VectorField& reference, std::size_t out_dim,
                            std::span<const std::vector<double>> x_points,
                            std::span<const std::vector<double>> y_points) {
  std::vector<double> a(out_dim), r(out_dim);
  double worst = 0.0;
  for (const auto& x : x_points) {
    for (const auto& y : y_points) {
      scaled(x, y, a);
      reference(x, y, r);
      for (std::size_t i = 0; i < out_dim; ++i) worst = std::max(worst, std::abs(a[i] - r[i]));
    }
  }
  return worst;
}

// ------------------------------------------------------------------ validation

ProbeGrid ProbeGrid::default_for(const MultiscaleSystem& sys) {
  ProbeGrid p;
  p.x_points.emplace_back(sys.slow_dim, 0.0);
  for (std::size_t i = 0; i < sys.slow_dim; ++i) {
    for (double v : {-2.0, -1.0, 1.0, 2.0}) {
      std::vector<double> x(sys.slow_dim, 0.0);
      x[i] = v;
      p.x_points.push_back(std::move(x));
    }
  }
  return p;
}

ValidationReport validate_system(const MultiscaleSystem& sys, const ProbeGrid& probe) {
  sys.check_shape();
  if (probe.x_points.empty() || probe.n_radii < 2 || !(probe.y_radius > 0.0)) {
    throw std::invalid_argument("validate_system: probe grid is empty");
  }
  const std::size_t m = sys.slow_dim, n = sys.fast_dim, k = sys.noise_dim;
  ValidationReport report;
  report.nondegeneracy_floor = std::numeric_limits<double>::infinity();

  // Fast probe points: origin and +-r e_j for r on a uniform radial grid.
  std::vector<std::vector<double>> directions;
  for (std::size_t j = 0; j < n; ++j) {
    for (double s : {1.0, -1.0}) {
      std::vector<double> d(n, 0.0);
      d[j] = s;
      directions.push_back(std::move(d));
    }
  }
  std::vector<double> radii(probe.n_radii);
  for (std::size_t i = 0; i < probe.n_radii; ++i) {
    radii[i] = probe.y_radius * static_cast<double>(i + 1) / static_cast<double>(probe.n_radii);
  }

  std::vector<double> bv(m), cv(m), sv(m * k), fv(n), gv(n);
  std::vector<double> y(n);
  auto check_finite = [&](std::span<const double> v, const char* what) {
    if (!all_finite(v)) {
      throw ValidationError(std::string("coefficient ") + what + " is not finite on the probe grid");
    }
  };

  // Nondegeneracy on every probe point.
  auto nondegeneracy_at = [&](const std::vector<double>& x, std::span<const double> yy) {
    const auto a = sys.fast_diffusion(x, yy);
    check_finite(a, "tau1/tau2");
    Eigen::Map<const Eigen::MatrixXd> A(a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    report.nondegeneracy_floor = std::min(report.nondegeneracy_floor, es.eigenvalues().minCoeff());
  };

  std::vector<double> profile(probe.n_radii, -std::numeric_limits<double>::infinity());
  // growth envelopes at each radius for b, c, sigma
  std::vector<double> env_b(probe.n_radii, 0.0), env_c(probe.n_radii, 0.0), env_s(probe.n_radii, 0.0);

  for (const auto& x : probe.x_points) {
    if (x.size() != m) throw std::invalid_argument("validate_system: probe x has wrong dimension");
    std::fill(y.begin(), y.end(), 0.0);
    nondegeneracy_at(x, y);
    for (const auto& d : directions) {
      for (std::size_t r = 0; r < radii.size(); ++r) {
        for (std::size_t j = 0; j < n; ++j) y[j] = radii[r] * d[j];
        nondegeneracy_at(x, y);
        sys.eval_f(x, y, fv);
        sys.eval_g(x, y, gv);
        check_finite(fv, "f");
        check_finite(gv, "g");
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double drift = probe.regime == Regime::regime1 ? fv[j] : probe.gamma * fv[j] + gv[j];
          dot += drift * y[j];
        }
        profile[r] = std::max(profile[r], dot);

        sys.eval_b(x, y, bv);
        sys.eval_c(x, y, cv);
        sys.eval_sigma(x, y, sv);
        check_finite(bv, "b");
        check_finite(cv, "c");
        check_finite(sv, "sigma");
        for (double v : bv) env_b[r] = std::max(env_b[r], std::abs(v));
        for (double v : cv) env_c[r] = std::max(env_c[r], std::abs(v));
        for (double v : sv) env_s[r] = std::max(env_s[r], std::abs(v));
      }
    }
  }

  if (!(report.nondegeneracy_floor > probe.nondegeneracy_tolerance)) {
    std::ostringstream os;
    os << "degenerate fast diffusion: min eigenvalue of tau1 tau1^T + tau2 tau2^T is "
       << report.nondegeneracy_floor;
    throw ValidationError(os.str());
  }

  // Recurrence: beyond some radius the worst-case drift.y must be negative and
  // strictly decreasing all the way to the grid edge.
  report.recurrence_profile = profile;
  std::size_t start = profile.size();
  while (start > 0) {
    const std::size_t i = start - 1;
    const bool negative = profile[i] < 0.0;
    const bool decreasing = i + 1 == profile.size() || profile[i + 1] < profile[i];
    if (!(negative && decreasing)) break;
    start = i;
  }
  // Require the confirmed tail to cover at least the outer half of the probes.
  report.recurrence_ok = start <= profile.size() / 2;
  report.recurrence_radius = start < radii.size() ? radii[start] : std::numeric_limits<double>::infinity();
  if (!report.recurrence_ok) report.warnings.emplace_back(kLyapunovWarning);

  auto growth = [&](const std::vector<double>& env) {
    const double outer = env.back();
    const double inner = env[env.size() / 2 - 1];  // radius R/2 when n_radii is even
    const double r_ratio = radii.back() / radii[env.size() / 2 - 1];
    constexpr double tiny = 1e-300;
    if (outer < tiny && inner < tiny) return 0.0;
    return std::log(std::max(outer, tiny) / std::max(inner, tiny)) / std::log(r_ratio);
  };
  report.growth_exponents["b"] = growth(env_b);
  report.growth_exponents["c"] = growth(env_c);
  report.growth_exponents["sigma"] = growth(env_s);
  return report;
}

// ------------------------------------------------------------------ simulation

std::string to_string(FastScheme s) { return s == FastScheme::euler_maruyama ? "euler_maruyama" : "exponential"; }

FastScheme fast_scheme_from_string(const std::string& name) {
  if (name == "euler_maruyama" || name == "euler" || name == "em") return FastScheme::euler_maruyama;
  if (name == "exponential" || name == "local_linear") return FastScheme::exponential;
  throw std::invalid_argument("unknown fast scheme '" + name + "'");
}

double step_cap(double epsilon, double delta, double c_step) {
  return c_step * std::min(1.0, delta * delta / epsilon);
}

std::size_t step_count(double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) throw std::invalid_argument("T and dt must be positive");
  return static_cast<std::size_t>(std::ceil(T / dt * (1.0 - 1e-12)));
}

void check_step(const MultiscaleSystem& sys, const ScaleSchedule& sched, double dt, const SimulationOptions& opts) {
  if (!(sched.epsilon > 0.0) || !(sched.delta > 0.0)) throw std::invalid_argument("epsilon and delta must be positive");
  const double cap = step_cap(sched.epsilon, sched.delta, opts.c_step);
  if (dt <= cap * (1.0 + 1e-12)) return;
  std::ostringstream os;
  if (opts.scheme == FastScheme::euler_maruyama) {
    os << "dt = " << dt << " exceeds the stiffness cap " << cap << " = c_step*min(1, delta^2/eps)";
    throw std::invalid_argument(os.str());
  }
  if (sys.has_b()) {
    os << "dt = " << dt << " exceeds the stiffness cap " << cap
       << "; the exponential scheme may only step over the fast scale when b == 0";
    throw std::invalid_argument(os.str());
  }
}

PairStepper::PairStepper(const MultiscaleSystem& sys, double epsilon, double delta, double dt, FastScheme scheme)
    : sys_(sys),
      eps_(epsilon),
      delta_(delta),
      dt_(dt),
      scheme_(scheme),
      m_(sys.slow_dim),
      n_(sys.fast_dim),
      k_(sys.noise_dim),
      b_(m_),
      c_(m_),
      sigma_(m_ * k_),
      f_(n_),
      g_(n_),
      tau1_(n_ * k_),
      tau2_(n_ * k_),
      dw_(k_),
      db_(k_),
      xi_(n_),
      x_old_(m_),
      y_old_(n_),
      fast_drift_(n_),
      fast_noise_(n_),
      y_probe_(n_),
      f_probe_(n_),
      g_probe_(n_) {
  sys.check_shape();
}

void PairStepper::step(std::span<double> x, std::span<double> y, RandomStream& rng) {
  const double h = dt_;
  const double sqrt_h = std::sqrt(h);
  const double sqrt_eps = std::sqrt(eps_);
  const double ratio = eps_ / delta_;

  std::copy(x.begin(), x.end(), x_old_.begin());
  std::copy(y.begin(), y.end(), y_old_.begin());

  rng.fill_normal(dw_, sqrt_h);
  rng.fill_normal(db_, sqrt_h);

  sys_.eval_b(x_old_, y_old_, b_);
  sys_.eval_c(x_old_, y_old_, c_);
  sys_.eval_sigma(x_old_, y_old_, sigma_);
  for (std::size_t i = 0; i < m_; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < k_; ++j) noise += sigma_[i * k_ + j] * dw_[j];
    x[i] = x_old_[i] + h * (ratio * b_[i] + c_[i]) + sqrt_eps * noise;
  }

  sys_.eval_tau1(x_old_, y_old_, tau1_);
  sys_.eval_tau2(x_old_, y_old_, tau2_);
  const double noise_scale = sqrt_eps / delta_;
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k_; ++j) s += tau1_[i * k_ + j] * dw_[j] + tau2_[i * k_ + j] * db_[j];
    fast_noise_[i] = noise_scale * s;
  }

  if (scheme_ == FastScheme::euler_maruyama) {
    sys_.eval_f(x_old_, y_old_, f_);
    sys_.eval_g(x_old_, y_old_, g_);
    for (std::size_t i = 0; i < n_; ++i) {
      y[i] = y_old_[i] + (h / delta_) * (ratio * f_[i] + g_[i]) + fast_noise_[i];
    }
    return;
  }

  rng.fill_normal(xi_);
  fast_exponential_update(x_old_, y);
}

// Local linearization: F(y) ~ F(y0) + A (y - y0) with A = dF/dy frozen over the
// step; the mean and the noise given (dW, dB) are then Gaussian and exact.
void PairStepper::fast_exponential_update(std::span<const double> x, std::span<double> y) {
  const double h = dt_;
  const double ratio = eps_ / delta_;
  auto drift = [&](std::span<const double> yy, std::span<double> out) {
    sys_.eval_f(x, yy, f_probe_);
    sys_.eval_g(x, yy, g_probe_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = (ratio * f_probe_[i] + g_probe_[i]) / delta_;
  };
  drift(y_old_, fast_drift_);

  const double noise_scale = std::sqrt(eps_) / delta_;
  if (n_ == 1) {
    const double hy = 1e-6 * (1.0 + std::abs(y_old_[0]));
    double plus = 0.0, minus = 0.0;
    y_probe_[0] = y_old_[0] + hy;
    drift(y_probe_, std::span<double>(&plus, 1));
    y_probe_[0] = y_old_[0] - hy;
    drift(y_probe_, std::span<double>(&minus, 1));
    const double z = (plus - minus) / (2.0 * hy) * h;
    double s2 = 0.0;
    for (std::size_t j = 0; j < k_; ++j) s2 += tau1_[j] * tau1_[j] + tau2_[j] * tau2_[j];
    s2 *= noise_scale * noise_scale;
    const double p = phi1(z);
    y[0] = y_old_[0] + h * p * fast_drift_[0] + p * fast_noise_[0] + std::sqrt(s2 * h * residual_factor(z)) * xi_[0];
    return;
  }

  // Jacobian by central differences.
  Eigen::MatrixXd A(n_, n_);
  std::vector<double> plus(n_), minus(n_);
  for (std::size_t j = 0; j < n_; ++j) {
    const double hy = 1e-6 * (1.0 + std::abs(y_old_[j]));
    std::copy(y_old_.begin(), y_old_.end(), y_probe_.begin());
    y_probe_[j] = y_old_[j] + hy;
    drift(y_probe_, plus);
    y_probe_[j] = y_old_[j] - hy;
    drift(y_probe_, minus);
    for (std::size_t i = 0; i < n_; ++i) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (plus[i] - minus[i]) / (2.0 * hy);
    }
  }

  // General fast dimension: phi1 and the noise covariance via Van Loan block exponentials.
  const auto N = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd S(N, 2 * static_cast<Eigen::Index>(k_));
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < k_; ++j) {
      S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = noise_scale * tau1_[i * k_ + j];
      S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k_ + j)) = noise_scale * tau2_[i * k_ + j];
    }
  }
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  block.topLeftCorner(N, N) = A * h;
  block.topRightCorner(N, N) = Eigen::MatrixXd::Identity(N, N) * h;
  const Eigen::MatrixXd int_exp = block.exp().topRightCorner(N, N);  // = h * phi1(A h)

  Eigen::MatrixXd van_loan = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  const Eigen::MatrixXd SSt = S * S.transpose();
  van_loan.topLeftCorner(N, N) = -A * h;
  van_loan.topRightCorner(N, N) = SSt * h;
  van_loan.bottomRightCorner(N, N) = A.transpose() * h;
  const Eigen::MatrixXd E = van_loan.exp();
  const Eigen::MatrixXd Q = E.bottomRightCorner(N, N).transpose() * E.topRightCorner(N, N);
  const Eigen::MatrixXd P = int_exp / h;
  Eigen::MatrixXd residual = Q - h * P * SSt * P.transpose();
  residual = 0.5 * (residual + residual.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(residual);
  const Eigen::VectorXd lambda = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root = es.eigenvectors() * lambda.asDiagonal();

  Eigen::Map<const Eigen::VectorXd> drift0(fast_drift_.data(), N);
  Eigen::Map<const Eigen::VectorXd> cond_noise(fast_noise_.data(), N);
  Eigen::Map<const Eigen::VectorXd> xi(xi_.data(), N);
  Eigen::Map<const Eigen::VectorXd> y0(y_old_.data(), N);
  const Eigen::VectorXd next = y0 + int_exp * drift0 + P * cond_noise + root * xi;
  for (std::size_t i = 0; i < n_; ++i) y[i] = next(static_cast<Eigen::Index>(i));
}

void integrate_path(const MultiscaleSystem& sys, const ScaleSchedule& sched, std::span<const double> x0,
                    std::span<const double> y0, double T, double dt, std::uint64_t seed,
                    const SimulationOptions& opts, const PathObserver& observe) {
  sys.check_shape();
  if (x0.size() != sys.slow_dim || y0.size() != sys.fast_dim) {
    throw std::invalid_argument("initial state dimension mismatch");
  }
  const std::size_t steps = step_count(T, dt);
  const double h = T / static_cast<double>(steps);
  check_step(sys, sched, h, opts);

  PairStepper stepper(sys, sched.epsilon, sched.delta, h, opts.scheme);
  RandomStream rng(seed, opts.path_index, StreamPurpose::path_noise);
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> y(y0.begin(), y0.end());
  observe(0, 0.0, x, y);
  for (std::size_t i = 1; i <= steps; ++i) {
    stepper.step(x, y, rng);
    const double t = i == steps ? T : h * static_cast<double>(i);
    for (double v : x) {
      if (!(std::abs(v) <= opts.overflow_guard)) {
        std::ostringstream os;
        os << "slow state exploded at t = " << t;
        throw SimulationBlowup(os.str(), t);
      }
    }
    for (double v : y) {
      if (!(std::abs(v) <= opts.overflow_guard)) {
        std::ostringstream os;
        os << "fast state exploded at t = " << t;
        throw SimulationBlowup(os.str(), t);
      }
    }
    observe(i, t, x, y);
  }
}

PathSample simulate_pair(const MultiscaleSystem& sys, const ScaleSchedule& sched, std::span<const double> x0,
                         std::span<const double> y0, double T, double dt, std::uint64_t seed,
                         const SimulationOptions& opts) {
  PathSample out;
  out.slow_dim = sys.slow_dim;
  out.fast_dim = sys.fast_dim;
  out.seed = seed;
  const std::size_t steps = step_count(T, dt);
  out.step = T / static_cast<double>(steps);
  const std::size_t stride = std::max<std::size_t>(1, opts.record_stride);
  integrate_path(sys, sched, x0, y0, T, dt, seed, opts,
                 [&](std::size_t i, double t, std::span<const double> x, std::span<const double> y) {
                   if (i % stride != 0 && i != steps) return;
                   out.times.push_back(t);
                   out.slow.insert(out.slow.end(), x.begin(), x.end());
                   out.fast.insert(out.fast.end(), y.begin(), y.end());
                 });
  return out;
}

}  // namespace twoscale
