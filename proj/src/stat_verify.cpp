#include "twoscale/stat_verify.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "twoscale/fluctuation.hpp"
#include "twoscale/parallel.hpp"

namespace twoscale {

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Jacobi theta form, fast for small lambda.
    const double w = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 7; k += 2) s += std::exp(-static_cast<double>(k * k) * w);
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

KsResult ks_gaussian(std::span<const double> samples, double mean, double variance) {
  if (!(variance > 0.0)) throw std::invalid_argument("ks_gaussian: variance must be positive");
  if (samples.size() < 100) throw std::invalid_argument("ks_gaussian: need at least 100 samples");
  const double sd = std::sqrt(variance);
  std::vector<double> z(samples.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (samples[i] - mean) / sd;
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double F = 0.5 * std::erfc(-z[i] / std::numbers::sqrt2);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  KsResult r;
  r.statistic = d;
  r.n = z.size();
  const double sqn = std::sqrt(n);
  r.p_value = kolmogorov_survival(sqn * d);
  return r;
}

namespace {

struct Moments {
  double mean, var, skew, kurt;
};

Moments moments(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = pairwise_sum(x) / n;
  std::vector<double> d2(x.size()), d3(x.size()), d4(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean;
    d2[i] = d * d;
    d3[i] = d2[i] * d;
    d4[i] = d2[i] * d2[i];
  }
  const double m2 = pairwise_sum(d2) / n, m3 = pairwise_sum(d3) / n, m4 = pairwise_sum(d4) / n;
  Moments out{mean, m2 * n / (n - 1.0), 0.0, 0.0};
  if (m2 > 0.0) {
    out.skew = m3 / std::pow(m2, 1.5);
    out.kurt = m4 / (m2 * m2) - 3.0;
  }
  return out;
}

}  // namespace

MomentReport moment_report(std::span<const double> samples) {
  if (samples.size() < 100) throw std::invalid_argument("moment_report: need at least 100 samples");
  const std::size_t n = samples.size();
  const std::size_t blocks = kJackknifeBlocks;
  const Moments full = moments(samples);

  std::vector<Moments> loo(blocks);
  std::vector<double> rest;
  rest.reserve(n);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * n / blocks, hi = (b + 1) * n / blocks;
    rest.clear();
    rest.insert(rest.end(), samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(lo));
    rest.insert(rest.end(), samples.begin() + static_cast<std::ptrdiff_t>(hi), samples.end());
    loo[b] = moments(rest);
  }
  auto jack = [&](double full_value, auto field) {
    double mean = 0.0;
    for (const auto& m : loo) mean += field(m);
    mean /= static_cast<double>(blocks);
    double ss = 0.0;
    for (const auto& m : loo) ss += (field(m) - mean) * (field(m) - mean);
    const double nb = static_cast<double>(blocks);
    return Estimate{full_value, std::sqrt((nb - 1.0) / nb * ss)};
  };
  MomentReport r;
  r.n = n;
  r.mean = jack(full.mean, [](const Moments& m) { return m.mean; });
  r.variance = jack(full.var, [](const Moments& m) { return m.var; });
  r.skewness = jack(full.skew, [](const Moments& m) { return m.skew; });
  r.excess_kurtosis = jack(full.kurt, [](const Moments& m) { return m.kurt; });
  return r;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double w = pos - static_cast<double>(i);
  return (1.0 - w) * values[i] + w * values[i + 1];
}

SupNormReport lln_supnorm(const MultiscaleSystem& sys, const ScaleSchedule& sched, const LimitOrbit& orbit,
                          std::span<const double> y0, double T, double dt, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& opts) {
  EnsembleOptions eo;
  eo.sim = opts;
  eo.record_times = {T};
  ScaleSchedule s = sched;
  if (!(s.beta > 0.0)) s.beta = 1.0;  // eta is not used here
  const auto ens = eta_ensemble(sys, s, orbit, y0, T, dt, n_paths, seed, eo);
  SupNormReport r;
  r.sup_errors = ens.sup_errors;
  r.median = quantile(r.sup_errors, 0.5);
  r.p90 = quantile(r.sup_errors, 0.9);
  return r;
}

void ConvergenceStudy::add(double epsilon, double value, double error) {
  if (!epsilons.empty() && !(epsilon < epsilons.back())) {
    throw std::invalid_argument("ConvergenceStudy: epsilons must be strictly decreasing");
  }
  epsilons.push_back(epsilon);
  values.push_back(value);
  errors.push_back(error);
  monotone = verdict();
}

bool ConvergenceStudy::verdict(double tolerance) const {
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double slack = tolerance * std::hypot(errors[i], errors[i - 1]);
    if (!(values[i] < values[i - 1] + slack)) return false;
  }
  return true;
}

void ConvergenceStudy::write_json(std::ostream& os) const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["epsilons"] = epsilons;
  j["values"] = values;
  j["errors"] = errors;
  j["monotone"] = monotone;
  os << j.dump(2) << '\n';
}

void ConvergenceStudy::write_csv(std::ostream& os) const {
  os << "epsilon,metric,err\n";
  os.precision(17);
  for (std::size_t i = 0; i < epsilons.size(); ++i) os << epsilons[i] << ',' << values[i] << ',' << errors[i] << '\n';
}

}  // namespace twoscale
