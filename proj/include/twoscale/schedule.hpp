#pragma once

#include <stdexcept>
#include <string>

namespace twoscale {

/// Interaction between noise size epsilon and scale separation delta:
/// regime1 when epsilon/delta -> infinity, regime2 when epsilon/delta -> gamma.
enum class Regime { regime1 = 1, regime2 = 2 };

/// Limit class of ell = lim sqrt(epsilon)/theta.
enum class EllClass { zero, finite, infinite };

std::string to_string(Regime r);
std::string to_string(EllClass c);

/// delta as a function of epsilon: either a * epsilon^p, or epsilon/gamma.
struct DeltaRule {
  enum class Kind { power, ratio };
  Kind kind = Kind::ratio;
  double coefficient = 1.0;  // a
  double exponent = 1.0;     // p

  static DeltaRule power(double a, double p) { return {Kind::power, a, p}; }
  static DeltaRule ratio() { return {Kind::ratio, 1.0, 1.0}; }

  double delta(double epsilon, double gamma) const;
  std::string describe() const;
};

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Scale bookkeeping of the fluctuation theorem: theta, its limit ratio ell,
/// and the normalization beta used to form eta = (X - Xbar)/beta.
struct ScaleSchedule {
  double epsilon = 0.0;
  double delta = 0.0;
  Regime regime = Regime::regime2;
  double gamma = 0.0;  // regime2 only
  DeltaRule rule{};
  double theta = 0.0;
  double ell = 0.0;  // +inf when ell_class == infinite
  EllClass ell_class = EllClass::infinite;
  double beta = 0.0;

  /// ell^-1 * 1(ell in (0, inf]) + 1(ell == 0): weight of the averaged J drift.
  double drift_weight() const;
  /// 1(ell != 0): whether the limiting noise survives.
  bool noise_on() const { return ell_class != EllClass::zero; }
};

inline constexpr double kDefaultRegimeThreshold = 10.0;

/// Builds the schedule for one epsilon from a delta rule. Throws ScheduleError
/// when the rule contradicts the declared regime (e.g. p <= 1 in regime 1) or
/// when epsilon/delta does not clear the regime-1 threshold.
ScaleSchedule classify_schedule(double epsilon, const DeltaRule& rule, Regime regime, double gamma,
                                double regime_threshold = kDefaultRegimeThreshold);

/// Schedule with explicit epsilon, delta and no asymptotic classification;
/// beta defaults to sqrt(epsilon). Used for plain path simulation.
ScaleSchedule fixed_schedule(double epsilon, double delta, Regime regime = Regime::regime2,
                             double gamma = 0.0);

}  // namespace twoscale
