#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoscale/schedule.hpp"
#include "twoscale/sde_core.hpp"

namespace twoscale {

using FastField = std::function<void(std::span<const double> y, std::span<double> out)>;

/// Generator of the fast process with the slow variable frozen at x:
///   regime 1: f . D_y + 1/2 tr[a D_y^2]
///   regime 2: (gamma f + g) . D_y + gamma/2 tr[a D_y^2]
/// with a = tau1 tau1^T + tau2 tau2^T.
struct FrozenGenerator {
  Regime regime = Regime::regime1;
  double gamma = 1.0;
  std::vector<double> x;
  std::size_t fast_dim = 1;
  FastField drift;      // fast_dim
  FastField diffusion;  // fast_dim x fast_dim, row-major, already scaled by gamma in regime 2
};

FrozenGenerator frozen_generator(const MultiscaleSystem& sys, Regime regime, double gamma,
                                 std::span<const double> x);

struct Domain {
  double lo = -6.0;
  double hi = 6.0;
};

struct DensityOptions {
  bool expand = true;             // grow the domain (same spacing) until the tail bound is met
  double tail_tolerance = 1e-10;  // unnormalized tail mass / total
  std::size_t max_expansions = 12;
};

class NonIntegrableDensity : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stationary density of a one-dimensional frozen generator on a uniform grid,
/// together with the drift and diffusion tabulated on the same grid.
struct InvariantMeasure1D {
  std::vector<double> grid;
  std::vector<double> density;
  std::vector<double> drift;
  std::vector<double> diffusion;
  double spacing = 0.0;
  double truncation_mass_bound = 0.0;
  /// int L phi dmu for phi in {y, y^2, sin y}; zero up to quadrature error.
  std::map<std::string, double> stationarity_residual;

  std::size_t size() const { return grid.size(); }
  /// Trapezoid integral of values * density over the grid.
  double integrate(std::span<const double> values) const;
  /// Trapezoid integral of the density alone.
  double mass() const;
};

/// Normalized speed-measure density a^-1 exp(int 2 drift/a), built with
/// fourth-order cumulative quadrature. Throws NonIntegrableDensity when the
/// tail bound cannot be met by expanding the domain.
InvariantMeasure1D invariant_density_1d(const FrozenGenerator& gen, Domain domain, std::size_t n_grid,
                                        const DensityOptions& opts = {});

/// Average of fn(x, .) against mu; fn is evaluated on mu's grid.
std::vector<double> average(const VectorField& fn, std::size_t out_dim, const InvariantMeasure1D& mu,
                            std::span<const double> x);

struct SamplerOptions {
  double dt = 0.0;                 // 0 selects 0.01 / max(1, |D drift|, |a|) at y_init
  std::vector<double> y_init;      // defaults to the origin
};

struct InvariantSample {
  std::vector<double> values;  // n_samples x fast_dim
  std::size_t fast_dim = 1;
  double dt = 0.0;
  double burn_in = 0.0;

  std::size_t count() const { return fast_dim == 0 ? 0 : values.size() / fast_dim; }
  /// Sample mean and standard error of fn over the samples.
  std::pair<double, double> mean_of(const std::function<double(std::span<const double>)>& fn) const;
};

/// Independent Euler-Maruyama chains of the frozen fast process; each chain
/// runs for `burn_in` time units and contributes its terminal state.
InvariantSample sample_invariant_mc(const FrozenGenerator& gen, double burn_in, std::size_t n_samples,
                                    std::uint64_t seed, const SamplerOptions& opts = {});

/// Two-column CSV: y,density
void write_density_csv(const InvariantMeasure1D& mu, std::ostream& os);

// Quadrature helpers shared with the cell solver.
namespace quadrature {
/// First derivative of uniformly sampled data, fourth-order differences.
std::vector<double> derivative(std::span<const double> values, double h);
/// Running integral from the left end, corrected trapezoid (O(h^4)).
std::vector<double> cumulative(std::span<const double> values, std::span<const double> derivative, double h);
/// Running integral from the right end, returned as int_{y_i}^{hi}.
std::vector<double> cumulative_from_right(std::span<const double> values, std::span<const double> derivative,
                                          double h);
double trapezoid(std::span<const double> values, double h);
}  // namespace quadrature

}  // namespace twoscale
