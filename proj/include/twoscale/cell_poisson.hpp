#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twoscale/ergodic.hpp"

namespace twoscale {

class CenteringError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Centered solution u of L_x u = -G on a one-dimensional fast grid, one
/// column per component of G. d_dy is computed from the quadrature formula,
/// d2_dy2 from the equation itself. The x-derivative tables are filled by
/// fill_x_derivatives and indexed [component][slow direction][grid point].
struct CellSolution {
  std::vector<double> grid;
  std::vector<double> x;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> d_dy;
  std::vector<std::vector<double>> d2_dy2;
  std::vector<std::vector<std::vector<double>>> d_dx;
  std::vector<std::vector<std::vector<double>>> d2_dx2;
  std::vector<std::vector<std::vector<double>>> d2_dxdy;
  double centering_residual = 0.0;   // max_k |int u_k dmu|
  double generator_residual = 0.0;   // max over interior of |drift u' + a u''/2 + G| / (1 + |G|)
  double growth_exponent_fit = 0.0;  // outer-band exponent of |u| (see validate_growth)

  std::size_t components() const { return values.size(); }
  double spacing() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }
  /// Cubic Hermite interpolation of u_k and du_k/dy; throws outside the grid.
  double value(std::size_t k, double y) const;
  double derivative(std::size_t k, double y) const;
};

inline constexpr double kCenteringTolerance = 1e-6;

/// Quadrature solver: u' = -(2/(a mu)) int_{lo}^{y} G mu, integrated and re-centered.
/// The running integral is taken from whichever end is closer in mass so tail
/// values keep relative accuracy. Throws CenteringError when int G dmu != 0.
CellSolution solve_cell_1d(const FrozenGenerator& gen, std::span<const std::vector<double>> rhs,
                           const InvariantMeasure1D& mu);

/// Same, with G(x, y) evaluated on mu's grid at the generator's frozen x.
CellSolution solve_cell_1d(const FrozenGenerator& gen, const VectorField& rhs, std::size_t components,
                           const InvariantMeasure1D& mu);

/// Shifts u by a constant so that int u dmu = 0; returns the shift applied.
double recenter(std::vector<double>& u, const InvariantMeasure1D& mu);

/// Fills d_dx, d2_dx2, d2_dxdy from five-point central stencils with step
/// 1e-3 (1 + |x_l|); `solve_at` must return a solution on the same grid.
void fill_x_derivatives(CellSolution& sol, const std::function<CellSolution(std::span<const double>)>& solve_at);

struct McCellEstimate {
  std::vector<std::vector<double>> y_points;
  std::vector<double> values;
  std::vector<double> std_errors;
  double horizon = 0.0;
  double dt = 0.0;
  /// Largest share of the integral contributed by the last 10% of the horizon.
  double tail_fraction = 0.0;
  bool horizon_adequate = false;
};

struct McCellOptions {
  double dt = 0.0;  // 0 selects 0.005 / max(1, |D drift|, |a|)
};

/// Feynman-Kac estimator u(y) = int_0^H E_y G(Y_t) dt with Euler-Maruyama
/// paths of the frozen process. Works for any fast dimension; G is scalar.
McCellEstimate solve_cell_mc(const FrozenGenerator& gen, const std::function<double(std::span<const double>)>& rhs,
                             std::span<const std::vector<double>> y_points, double horizon, std::size_t n_paths,
                             std::uint64_t seed, const McCellOptions& opts = {});

/// Cell problem chi for G = b (regime 1). Throws CenteringError when b is
/// not centered; b == 0 gives chi == 0.
CellSolution chi_solution(const MultiscaleSystem& sys, const InvariantMeasure1D& mu, std::span<const double> x);

struct GrowthFit {
  double exponent = 0.0;        // outer band [R/2, R]
  double inner_exponent = 0.0;  // inner band [R/4, R/2]
  bool super_polynomial = false;
};

struct GrowthReport {
  std::map<std::string, GrowthFit> fits;  // "u", "du/dx", "d2u/dx2", "d2u/dxdy"
  bool super_polynomial = false;
};

/// Fits |u| ~ C(1 + |y|^q) from the sup envelope over dyadic radii R/4, R/2, R.
GrowthFit fit_growth(std::span<const double> grid, std::span<const double> values);
GrowthReport validate_growth(const CellSolution& sol);

/// CSV with columns y,u,du_dy for one component.
void write_cell_csv(const CellSolution& sol, std::size_t component, std::ostream& os);

}  // namespace twoscale
