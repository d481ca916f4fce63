#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "twoscale/homogenize.hpp"
#include "twoscale/schedule.hpp"
#include "twoscale/sde_core.hpp"

namespace twoscale {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Asymptotic Kolmogorov survival function P(K > lambda).
double kolmogorov_survival(double lambda);

/// One-sample KS test of the samples against N(mean, variance), computed on
/// standardized values. Requires n >= 100 and variance > 0.
KsResult ks_gaussian(std::span<const double> samples, double mean, double variance);

struct Estimate {
  double value = 0.0;
  double error = 0.0;  // jackknife standard error
};

struct MomentReport {
  std::size_t n = 0;
  Estimate mean, variance, skewness, excess_kurtosis;
};

inline constexpr std::size_t kJackknifeBlocks = 50;

/// Sample moments with blocked (50 blocks) leave-one-block-out jackknife errors. Requires n >= 100.
MomentReport moment_report(std::span<const double> samples);

double quantile(std::vector<double> values, double p);

struct SupNormReport {
  std::vector<double> sup_errors;
  double median = 0.0;
  double p90 = 0.0;
};

/// sup_t |X_t - Xbar_t| over n_paths paths started at orbit.x0, y0.
SupNormReport lln_supnorm(const MultiscaleSystem& sys, const ScaleSchedule& sched, const LimitOrbit& orbit,
                          std::span<const double> y0, double T, double dt, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& opts = {});

struct ConvergenceStudy {
  std::string metric;
  std::vector<double> epsilons;  // strictly decreasing
  std::vector<double> values;
  std::vector<double> errors;
  bool monotone = false;

  void add(double epsilon, double value, double error);
  /// True when every step decreases the metric by at least -tolerance * combined error
  /// (default tolerance 0: strictly decreasing point estimates).
  bool verdict(double tolerance = 0.0) const;
  void write_json(std::ostream& os) const;
  void write_csv(std::ostream& os) const;  // epsilon,metric,err
};

}  // namespace twoscale
