#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "twoscale/homogenize.hpp"
#include "twoscale/schedule.hpp"
#include "twoscale/sde_core.hpp"

namespace twoscale {

/// dyadic comparison times {T/8, T/4, T/2, T} preceded by 0.
std::vector<double> dyadic_times(double T, std::size_t levels = 4);

struct EnsembleSummary {
  std::vector<std::vector<double>> mean;               // [time][m]
  std::vector<std::vector<std::vector<double>>> cov;  // [time][m][m], unbiased
};

/// eta = (X - Xbar)/beta recorded at `times` for every path.
struct FluctuationEnsemble {
  ScaleSchedule sched;
  std::vector<double> times;
  std::size_t slow_dim = 1;
  std::size_t n_paths = 0;
  std::vector<double> eta;         // n_paths x times x slow_dim
  std::vector<double> sup_errors;  // per path sup_t |X_t - Xbar_t| over the simulation grid
  double dt = 0.0;
  EnsembleSummary summary;

  double at(std::size_t path, std::size_t time, std::size_t k) const {
    return eta[(path * times.size() + time) * slow_dim + k];
  }
  /// Component k of eta at time index i over all paths.
  std::vector<double> marginal(std::size_t time, std::size_t k = 0) const;
};

EnsembleSummary summarize(std::span<const double> data, std::size_t n_paths, std::size_t n_times, std::size_t m);

struct EnsembleOptions {
  SimulationOptions sim{};
  std::vector<double> record_times;  // defaults to dyadic_times(T)
};

/// Simulates n_paths of (X, Y) and forms eta pathwise against the orbit.
/// Throws std::invalid_argument when beta is not positive or the orbit is
/// shorter than T.
FluctuationEnsemble eta_ensemble(const MultiscaleSystem& sys, const ScaleSchedule& sched, const LimitOrbit& orbit,
                                 std::span<const double> y0, double T, double dt, std::size_t n_paths,
                                 std::uint64_t seed, const EnsembleOptions& opts = {});

/// Coefficients of the limiting linear equation
///   d eta = A(t) eta dt + w Jbar(t) dt + 1(noise) qbar(t)^{1/2} dW
/// tabulated on time nodes and interpolated linearly in between.
struct OULimit {
  std::size_t slow_dim = 1;
  std::vector<double> grid;        // increasing nodes on [0, T]
  std::vector<double> A;           // grid x m x m
  std::vector<double> J_bar;       // grid x m
  std::vector<double> q_bar;       // grid x m x m
  std::vector<double> q_bar_sqrt;  // grid x m x m
  double drift_weight = 0.0;
  bool noise_on = true;

  void A_at(double t, std::span<double> out) const;
  void J_bar_at(double t, std::span<double> out) const;
  void q_bar_at(double t, std::span<double> out) const;
  void q_bar_sqrt_at(double t, std::span<double> out) const;
  double horizon() const { return grid.back(); }
};

using MatrixFunction = std::function<std::vector<double>(double t)>;

/// Tabulates A = D lambda_bar, Jbar, qbar at every `stride`-th orbit node and the final one.
OULimit ou_limit(const HomogenizedModel& model, const LimitOrbit& orbit, const ScaleSchedule& sched,
                 std::size_t stride = 1);
/// Same from explicit functions of time, tabulated on n_nodes + 1 points.
OULimit ou_limit(std::size_t m, const MatrixFunction& A, const MatrixFunction& J_bar, const MatrixFunction& q_bar,
                 double T, std::size_t n_nodes, double drift_weight, bool noise_on);
/// Time-independent coefficients.
OULimit ou_limit_constant(std::span<const double> A, std::span<const double> J_bar, std::span<const double> q_bar,
                          double T, double drift_weight, bool noise_on);

struct OUEnsemble {
  std::vector<double> times;
  std::size_t slow_dim = 1;
  std::size_t n_paths = 0;
  std::vector<double> paths;  // n_paths x times x m
  double dt = 0.0;
  EnsembleSummary summary;

  std::vector<double> marginal(std::size_t time, std::size_t k = 0) const;
};

/// Euler-Maruyama paths of the limit equation; path p uses the limit-noise
/// substream p of `seed`, shared with duhamel_solution.
OUEnsemble simulate_limit_ou(const OULimit& limit, double T, double dt, std::size_t n_paths, std::uint64_t seed,
                             std::vector<double> record_times = {});

inline constexpr double kPsiConditionLimit = 1e12;

struct DuhamelResult {
  OUEnsemble eta;            // Theta 1(noise) + w H
  std::vector<double> times;  // fine grid
  std::vector<double> Psi;    // times x m x m
  std::vector<double> H;      // times x m
  double max_condition = 1.0;
};

/// Fundamental solution Psi' = A Psi, Psi(0) = I (RK4), H = Psi int Psi^-1 Jbar ds
/// (trapezoid) and Theta = Psi int Psi^-1 qbar^{1/2} dW (left-point sums on
/// the same noise increments as simulate_limit_ou). Throws std::runtime_error
/// when cond(Psi) exceeds kPsiConditionLimit.
DuhamelResult duhamel_solution(const OULimit& limit, double T, double dt, std::size_t n_paths, std::uint64_t seed,
                               std::vector<double> record_times = {});

struct CovarianceTable {
  std::vector<double> times;
  std::vector<double> sigma;  // times x m x m
  std::size_t slow_dim = 1;

  std::span<const double> at(std::size_t i) const { return {sigma.data() + i * slow_dim * slow_dim, slow_dim * slow_dim}; }
  std::span<const double> terminal() const { return at(times.size() - 1); }
};

/// RK4 for Sigma' = A Sigma + Sigma A^T + qbar, Sigma(0) = 0. Requires noise_on.
CovarianceTable ou_covariance(const OULimit& limit, double T, double dt);

/// Deterministic mean m' = A m + w Jbar, m(0) = 0 (RK4), terminal value.
std::vector<double> ou_mean(const OULimit& limit, double T, double dt);

/// {"epsilon","regime","beta","ell","times","mean","cov","ks"} as JSON text.
void write_ensemble_json(const FluctuationEnsemble& ens, std::span<const double> ks, std::ostream& os);
/// path_id,eta_value (component 0 at the final recorded time).
void write_terminal_csv(const FluctuationEnsemble& ens, std::ostream& os);

}  // namespace twoscale
