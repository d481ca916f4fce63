#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoscale/rng.hpp"
#include "twoscale/schedule.hpp"

namespace twoscale {

/// Coefficient callbacks write into `out` (length rows for vectors, rows*cols
/// row-major for matrices). They must be pure and reentrant.
using VectorField =
    std::function<void(std::span<const double> x, std::span<const double> y, std::span<double> out)>;
using MatrixField = VectorField;

/// Coefficient bundle of the two-scale system
///
///   dX = [(eps/delta) b + c] ds + sqrt(eps) sigma dW
///   dY = (1/delta)[(eps/delta) f + g] ds + (sqrt(eps)/delta)[tau1 dW + tau2 dB]
///
/// with W, B independent noise_dim-dimensional Brownian motions.
/// `b` and `g` may be left empty, which means identically zero.
struct MultiscaleSystem {
  std::string name;
  std::size_t slow_dim = 1;
  std::size_t fast_dim = 1;
  std::size_t noise_dim = 1;
  VectorField b;
  VectorField c;
  MatrixField sigma;  // slow_dim x noise_dim
  VectorField f;
  VectorField g;
  MatrixField tau1;  // fast_dim x noise_dim
  MatrixField tau2;  // fast_dim x noise_dim

  bool has_b() const { return static_cast<bool>(b); }
  bool has_g() const { return static_cast<bool>(g); }

  // Evaluation helpers; absent b/g evaluate to zero.
  void eval_b(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void eval_c(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void eval_sigma(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void eval_f(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void eval_g(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void eval_tau1(std::span<const double> x, std::span<const double> y, std::span<double> out) const;
  void eval_tau2(std::span<const double> x, std::span<const double> y, std::span<double> out) const;

  /// Fast diffusion matrix a = tau1 tau1^T + tau2 tau2^T (fast_dim x fast_dim, row-major).
  std::vector<double> fast_diffusion(std::span<const double> x, std::span<const double> y) const;

  /// Throws std::invalid_argument when dimensions or required callbacks are missing.
  void check_shape() const;
};

/// Scalar helpers for the common m = d - m = kappa = 1 case.
VectorField scalar_field(std::function<double(double x, double y)> fn);
VectorField constant_field(std::vector<double> values);

/// Physical-time system dX = c ds + sigma dW, dY = delta^-2 f ds + delta^-1 [tau1 dW + tau2 dB].
struct PhysicalSystem {
  std::string name;
  std::size_t slow_dim = 1;
  std::size_t fast_dim = 1;
  std::size_t noise_dim = 1;
  VectorField c;
  MatrixField sigma;
  VectorField f;
  MatrixField tau1;
  MatrixField tau2;
};

/// Time change s -> eps s: returns the two-scale form with b = g = 0 and
/// slow drift eps * c. Fast coefficients and diffusion matrices are unchanged.
MultiscaleSystem rescale_short_time(const PhysicalSystem& physical, double epsilon);

/// sup over probe points of |scaled - reference| componentwise.
double probe_sup_difference(const VectorField& scaled, const VectorField& reference, std::size_t out_dim,
                            std::span<const std::vector<double>> x_points,
                            std::span<const std::vector<double>> y_points);

// ---------------------------------------------------------------- validation

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProbeGrid {
  std::vector<std::vector<double>> x_points;  // slow probe points
  double y_radius = 8.0;                       // recurrence/growth probes along +-e_j up to this radius
  std::size_t n_radii = 16;
  Regime regime = Regime::regime1;
  double gamma = 1.0;
  double nondegeneracy_tolerance = 1e-10;

  /// Axis lattice {-2,-1,0,1,2} along each slow coordinate plus the origin.
  static ProbeGrid default_for(const MultiscaleSystem& sys);
};

inline constexpr const char* kLyapunovWarning = "Lyapunov condition not numerically confirmed";

struct ValidationReport {
  double nondegeneracy_floor = 0.0;  // min eigenvalue of tau1 tau1^T + tau2 tau2^T over probes
  bool recurrence_ok = false;
  double recurrence_radius = 0.0;    // radius beyond which (drift . y) is negative and decreasing
  std::vector<double> recurrence_profile;  // sup_x drift(x, r e) . (r e), worst direction, per radius
  std::map<std::string, double> growth_exponents;  // fitted q in K(1+|y|^q) for b, c, sigma
  std::vector<std::string> warnings;
};

/// Numeric checks of the standing assumptions. Throws ValidationError on a
/// degenerate fast diffusion or non-finite coefficients; a failed recurrence
/// check only adds kLyapunovWarning to the report.
ValidationReport validate_system(const MultiscaleSystem& sys, const ProbeGrid& probe);

// ---------------------------------------------------------------- simulation

/// Fast-component integrator. euler_maruyama is the reference scheme and is
/// subject to the stiffness cap dt <= c_step * min(1, delta^2/eps).
/// exponential is the local-linearization scheme: exact for Ornstein-Uhlenbeck
/// fast dynamics, usable beyond the cap when b == 0.
enum class FastScheme { euler_maruyama, exponential };

std::string to_string(FastScheme s);
FastScheme fast_scheme_from_string(const std::string& name);

struct SimulationOptions {
  FastScheme scheme = FastScheme::euler_maruyama;
  double c_step = 0.1;
  std::size_t record_stride = 1;  // keep every k-th state in PathSample
  std::uint64_t path_index = 0;   // substream id under the master seed
  double overflow_guard = 1e12;
};

inline constexpr double kDefaultStepConstant = 0.1;

/// c_step * min(1, delta^2 / eps).
double step_cap(double epsilon, double delta, double c_step = kDefaultStepConstant);

class SimulationBlowup : public std::runtime_error {
 public:
  SimulationBlowup(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

struct PathSample {
  std::vector<double> times;
  std::vector<double> slow;  // times.size() x slow_dim, row-major
  std::vector<double> fast;  // times.size() x fast_dim, row-major
  std::size_t slow_dim = 0;
  std::size_t fast_dim = 0;
  std::uint64_t seed = 0;
  double step = 0.0;

  std::span<const double> slow_at(std::size_t i) const { return {slow.data() + i * slow_dim, slow_dim}; }
  std::span<const double> fast_at(std::size_t i) const { return {fast.data() + i * fast_dim, fast_dim}; }
};

/// One-step propagator for (X, Y); holds scratch buffers, so use one per thread.
class PairStepper {
 public:
  PairStepper(const MultiscaleSystem& sys, double epsilon, double delta, double dt, FastScheme scheme);

  /// Advances (x, y) in place by one step of size dt().
  void step(std::span<double> x, std::span<double> y, RandomStream& rng);

  double dt() const { return dt_; }

 private:
  void fast_exponential_update(std::span<const double> x, std::span<double> y);

  const MultiscaleSystem& sys_;
  double eps_, delta_, dt_;
  FastScheme scheme_;
  std::size_t m_, n_, k_;
  std::vector<double> b_, c_, sigma_, f_, g_, tau1_, tau2_;
  std::vector<double> dw_, db_, xi_;
  std::vector<double> x_old_, y_old_;
  std::vector<double> fast_drift_, fast_noise_, y_probe_, f_probe_, g_probe_;
};

/// Number of uniform steps covering [0, T] with step <= dt.
std::size_t step_count(double T, double dt);

/// Observer receives (step index, time, x, y) after every step, starting at step 0 = initial state.
using PathObserver =
    std::function<void(std::size_t, double, std::span<const double>, std::span<const double>)>;

/// Integrates one path and streams states to `observe`. Throws SimulationBlowup.
void integrate_path(const MultiscaleSystem& sys, const ScaleSchedule& sched, std::span<const double> x0,
                    std::span<const double> y0, double T, double dt, std::uint64_t seed,
                    const SimulationOptions& opts, const PathObserver& observe);

/// Euler-Maruyama (or exponential fast scheme) sample path of the two-scale
/// system. Identical inputs reproduce bit-identical paths.
PathSample simulate_pair(const MultiscaleSystem& sys, const ScaleSchedule& sched, std::span<const double> x0,
                         std::span<const double> y0, double T, double dt, std::uint64_t seed,
                         const SimulationOptions& opts = {});

/// Validates the requested step against the scheme's constraints; throws std::invalid_argument.
void check_step(const MultiscaleSystem& sys, const ScaleSchedule& sched, double dt, const SimulationOptions& opts);

}  // namespace twoscale
