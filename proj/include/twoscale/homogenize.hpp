#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "twoscale/cell_poisson.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/schedule.hpp"
#include "twoscale/sde_core.hpp"

namespace twoscale {

/// lambda_i on mu's grid, one column per slow component, and its mu-average.
struct LambdaTable {
  std::vector<std::vector<double>> values;  // [component][grid]
  std::vector<double> bar;
  double centering_residual = 0.0;  // max_k |int (lambda_k - bar_k) dmu|
};

/// regime 1: lambda = c + (d chi/dy) g; regime 2: lambda = gamma b + c.
/// Throws std::invalid_argument when chi is missing in regime 1.
LambdaTable build_lambda(const MultiscaleSystem& sys, Regime regime, double gamma, const InvariantMeasure1D& mu,
                         std::span<const double> x, const CellSolution* chi);

struct FluctuationCoefficients {
  std::vector<std::vector<double>> J;  // [component][grid]
  std::vector<std::vector<double>> q;  // [grid][m*m], row-major
  std::vector<double> J_bar;
  std::vector<double> q_bar;       // m*m
  std::vector<double> q_bar_sqrt;  // m*m, symmetric PSD root
  double min_eigenvalue = 0.0;     // of q_bar before clamping
};

inline constexpr double kPsdTolerance = 1e-12;

/// J and q for either regime; phi is the corrector solving L phi = -(lambda - lambda_bar).
/// regime 1: J = phi' g, q = (sigma + chi' tau1)(..)^T + (chi' tau2)(..)^T
/// regime 2: J = b - (lambda - lambda_bar + phi' g)/gamma, q as above with phi' for chi'.
/// Throws std::runtime_error when q_bar is not PSD within tolerance.
FluctuationCoefficients build_J_q(const MultiscaleSystem& sys, Regime regime, double gamma,
                                  const InvariantMeasure1D& mu, std::span<const double> x, const CellSolution* chi,
                                  const CellSolution& phi, const LambdaTable& lambda);

/// Symmetric PSD square root (row-major m x m) via eigendecomposition; eigenvalues
/// above -tolerance * max(1, |lambda_max|) are clamped to zero, more negative ones throw.
std::vector<double> psd_sqrt(std::span<const double> matrix, std::size_t m, double tolerance = kPsdTolerance,
                             double* min_eigenvalue = nullptr);

struct HomogenizeOptions {
  Domain domain{};
  std::size_t n_grid = 4001;
  DensityOptions density{};
};

/// Everything the limit theorems need at one frozen slow point.
struct FrozenPoint {
  std::vector<double> x;
  InvariantMeasure1D mu;
  std::shared_ptr<const CellSolution> chi;  // regime 1 only
  CellSolution phi;
  LambdaTable lambda;
  FluctuationCoefficients coeffs;
};

/// Homogenized coefficients for a fast dimension of one, memoized by x.
/// Immutable after construction apart from the internal cache, which is
/// guarded, so one instance can be shared between threads.
class HomogenizedModel {
 public:
  HomogenizedModel(MultiscaleSystem sys, Regime regime, double gamma, HomogenizeOptions opts = {});

  Regime regime() const { return regime_; }
  double gamma() const { return gamma_; }
  std::size_t slow_dim() const { return sys_.slow_dim; }
  const MultiscaleSystem& system() const { return sys_; }

  std::shared_ptr<const FrozenPoint> at(std::span<const double> x) const;

  std::vector<double> lambda(std::span<const double> x, double y) const;
  std::vector<double> lambda_bar(std::span<const double> x) const;
  std::vector<double> D_lambda_bar(std::span<const double> x) const;  // m x m row-major
  std::vector<double> J(std::span<const double> x, double y) const;
  std::vector<double> q(std::span<const double> x, double y) const;
  std::vector<double> J_bar(std::span<const double> x) const;
  std::vector<double> q_bar(std::span<const double> x) const;
  std::vector<double> q_bar_sqrt(std::span<const double> x) const;

  std::size_t cache_size() const;

 private:
  std::shared_ptr<const FrozenPoint> compute(std::span<const double> x) const;

  MultiscaleSystem sys_;
  Regime regime_;
  double gamma_;
  HomogenizeOptions opts_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<double>, std::shared_ptr<const FrozenPoint>> cache_;
};

using DriftFunction = std::function<std::vector<double>(std::span<const double>)>;

/// Central-difference Jacobian with step 1e-5 (1 + |x_j|), row-major m x m.
std::vector<double> jacobian(const DriftFunction& fn, std::span<const double> x);
std::vector<double> jacobian_lambda_bar(const HomogenizedModel& model, std::span<const double> x);

struct LimitOrbit {
  std::vector<double> times;
  std::vector<double> states;  // times.size() x slow_dim
  std::vector<double> rates;   // lambda_bar along the orbit, same layout
  std::vector<double> x0;
  std::size_t slow_dim = 1;
  double step = 0.0;
  double error_estimate = 0.0;  // sup |X_dt - X_{dt/2}| * 16/15 over common nodes
  double max_jacobian_norm = 0.0;

  std::span<const double> state(std::size_t i) const { return {states.data() + i * slow_dim, slow_dim}; }
  /// Cubic Hermite interpolation between nodes; clamps t to [0, T].
  std::vector<double> state_at(double t) const;
  void state_at(double t, std::span<double> out) const;
};

/// Classical RK4 on a uniform grid of steps <= dt, with a step-halving error
/// estimate. Throws SimulationBlowup when the orbit leaves |x| < 1e12.
LimitOrbit solve_limit_ode(const DriftFunction& drift, std::span<const double> x0, double T, double dt);
LimitOrbit solve_limit_ode(const HomogenizedModel& model, std::span<const double> x0, double T, double dt);

/// CSV with columns t,x1..xm.
void write_orbit_csv(const LimitOrbit& orbit, std::ostream& os);

}  // namespace twoscale
