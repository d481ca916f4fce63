#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twoscale/sde_core.hpp"

namespace twoscale {

/// Stochastic-volatility style example: b = 0, sigma(y), f = m - y, g = 0,
/// tau1 = rho, tau2 = sqrt(1 - rho^2). The fast invariant law is N(m, 1/2).
struct SVParams {
  double m = 0.5;
  double rho = 0.0;
  double gamma = 2.0;
  std::function<double(double)> sigma_fn = [](double) { return 1.0; };
  std::function<double(double, double)> c_fn = [](double, double y) { return y * y; };
  bool c_is_y2 = true;  // closed forms for the corrector need c = y^2
  double x0 = 0.0;
  std::optional<double> y0;  // defaults to m

  double initial_fast() const { return y0.value_or(m); }
};

MultiscaleSystem build_sv(const SVParams& params);

/// Gauss-Hermite nodes and weights for int h(y) e^{-y^2} dy (Golub-Welsch).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermite gauss_hermite(std::size_t n);

/// E_mu[h] for mu = N(m, 1/2), by n-point Gauss-Hermite.
double gaussian_expectation(const std::function<double(double)>& h, double m, std::size_t n = 80);

/// (y^2/2 + m y - 1/4 - 3 m^2/2) / gamma. Throws std::logic_error unless c = y^2.
double phi2_closed_form(double y, const SVParams& params);
double phi2_closed_form_derivative(double y, const SVParams& params);
/// 1/2 + m^2 for c = y^2.
double cbar_closed_form(const SVParams& params);
/// q = int sigma^2 dmu.
double q_closed_form(const SVParams& params);
/// q + (4 m^2 + 1/2)/gamma^2 + (2 rho/(gamma sqrt(pi))) int sigma(y) (y + m) e^{-(y-m)^2} dy.
double qbar2_closed_form(const SVParams& params);

struct LDPRate {
  double q = 1.0;
  double x0 = 0.0;
};

/// (x1 - x0)^2 / (2 q).
double ldp_rate(double x1, const LDPRate& rate);

struct TailEstimate {
  double nu = 0.0;
  double t = 0.0;
  std::size_t n_paths = 0;
  std::size_t exceedances = 0;
  double probability = 0.0;
  double std_error = 0.0;
  double predicted = 0.0;             // exp(-nu^2 / (2 q))
  double log_probability = 0.0;
  double predicted_log = 0.0;         // -nu^2 / (2 q)
  double relative_log_error = 0.0;    // |log p - predicted_log| / |predicted_log|
};

struct TailOptions {
  double dt = 1e-2;  // step in rescaled time s in [0, 1]
  std::size_t min_exceedances = 50;
};

/// Monte Carlo estimate of P{(X_t - x0)/sqrt(t) >= nu} from the rescaled
/// system with epsilon = t, delta = t^2 and slow drift t c (so eps c^eps -> 0),
/// run with the exponential fast scheme. Throws std::runtime_error with a hint
/// when fewer than min_exceedances paths exceed the level.
TailEstimate short_time_tail(const SVParams& params, double nu, double t, std::size_t n_paths, std::uint64_t seed,
                             const TailOptions& opts = {});

}  // namespace twoscale
