#include "twoscale/schedule.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace twoscale {

std::string to_string(Regime r) { return r == Regime::regime1 ? "regime1" : "regime2"; }

std::string to_string(EllClass c) {
  switch (c) {
    case EllClass::zero: return "zero";
    case EllClass::finite: return "finite";
    default: return "infinite";
  }
}

double DeltaRule::delta(double epsilon, double gamma) const {
  if (kind == Kind::ratio) return epsilon / gamma;
  return coefficient * std::pow(epsilon, exponent);
}

std::string DeltaRule::describe() const {
  std::ostringstream os;
  if (kind == Kind::ratio) {
    os << "delta = epsilon/gamma";
  } else {
    os << "delta = " << coefficient << " * epsilon^" << exponent;
  }
  return os.str();
}

double ScaleSchedule::drift_weight() const {
  switch (ell_class) {
    case EllClass::zero: return 1.0;
    case EllClass::finite: return 1.0 / ell;
    default: return 0.0;
  }
}

ScaleSchedule classify_schedule(double epsilon, const DeltaRule& rule, Regime regime, double gamma,
                                double regime_threshold) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ScheduleError("epsilon must be positive");
  if (rule.kind == DeltaRule::Kind::power && !(rule.coefficient > 0.0)) {
    throw ScheduleError("delta rule coefficient must be positive");
  }

  ScaleSchedule s;
  s.epsilon = epsilon;
  s.regime = regime;
  s.rule = rule;
  constexpr double inf = std::numeric_limits<double>::infinity();

  if (regime == Regime::regime1) {
    // epsilon/delta = epsilon^(1-p)/a diverges only for p > 1.
    if (rule.kind == DeltaRule::Kind::ratio) {
      throw ScheduleError("regime 1 needs epsilon/delta -> infinity; delta = epsilon/gamma keeps it bounded");
    }
    if (!(rule.exponent > 1.0)) {
      throw ScheduleError("regime 1 needs epsilon/delta -> infinity, which fails for " + rule.describe());
    }
    s.delta = rule.delta(epsilon, gamma);
    if (!(epsilon / s.delta > regime_threshold)) {
      std::ostringstream os;
      os << "regime 1 requires epsilon/delta > " << regime_threshold << ", got " << epsilon / s.delta;
      throw ScheduleError(os.str());
    }
    s.theta = s.delta / epsilon;
    // sqrt(eps)/theta = eps^(3/2 - p)/a
    const double power = 1.5 - rule.exponent;
    if (power > 0.0) {
      s.ell_class = EllClass::zero;
      s.ell = 0.0;
    } else if (power == 0.0) {
      s.ell_class = EllClass::finite;
      s.ell = 1.0 / rule.coefficient;
    } else {
      s.ell_class = EllClass::infinite;
      s.ell = inf;
    }
  } else {
    if (!(gamma > 0.0)) throw ScheduleError("regime 2 needs gamma > 0");
    s.gamma = gamma;
    if (rule.kind == DeltaRule::Kind::power) {
      // a*eps^p with epsilon/delta -> gamma forces p = 1 and a = 1/gamma.
      if (rule.exponent != 1.0 || std::abs(1.0 / rule.coefficient - gamma) > 1e-12 * gamma) {
        throw ScheduleError("regime 2 needs epsilon/delta -> gamma, which fails for " + rule.describe());
      }
    }
    s.delta = rule.delta(epsilon, gamma);
    // Both supported forms give epsilon/delta == gamma identically.
    s.theta = 0.0;
    s.ell_class = EllClass::infinite;
    s.ell = inf;
  }
  s.beta = s.ell_class == EllClass::zero ? s.theta : std::sqrt(epsilon);
  return s;
}

ScaleSchedule fixed_schedule(double epsilon, double delta, Regime regime, double gamma) {
  if (!(epsilon > 0.0) || !(delta > 0.0)) throw ScheduleError("epsilon and delta must be positive");
  ScaleSchedule s;
  s.epsilon = epsilon;
  s.delta = delta;
  s.regime = regime;
  s.gamma = gamma;
  s.rule = DeltaRule::power(delta / epsilon, 1.0);
  s.theta = regime == Regime::regime1 ? delta / epsilon : epsilon / delta - gamma;
  s.ell_class = EllClass::infinite;
  s.ell = std::numeric_limits<double>::infinity();
  s.beta = std::sqrt(epsilon);
  return s;
}

}  // namespace twoscale
