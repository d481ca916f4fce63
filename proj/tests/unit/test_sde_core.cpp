#include <doctest.h>

#include <cmath>
#include <vector>

#include "twoscale/ergodic.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/sde_core.hpp"
#include "twoscale/sv_example.hpp"

using namespace twoscale;

namespace {

MultiscaleSystem zero_drift(double sigma, double tau) {
  MultiscaleSystem s;
  s.name = "zero drift";
  s.c = constant_field({0.0});
  s.sigma = constant_field({sigma});
  s.f = constant_field({0.0});
  s.tau1 = constant_field({tau});
  s.tau2 = constant_field({0.0});
  return s;
}

}  // namespace

TEST_SUITE("sde_core") {
  TEST_CASE("validate: sv model is nondegenerate and recurrent") {
    const auto sys = build_sv({});
    const auto rep = validate_system(sys, ProbeGrid::default_for(sys));
    CHECK(rep.nondegeneracy_floor == doctest::Approx(1.0));
    CHECK(rep.recurrence_ok);
    CHECK(rep.warnings.empty());
  }

  TEST_CASE("validate: f = +y triggers the Lyapunov warning") {
    auto sys = build_sv({});
    sys.f = scalar_field([](double, double y) { return y; });
    const auto rep = validate_system(sys, ProbeGrid::default_for(sys));
    CHECK_FALSE(rep.recurrence_ok);
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0].find(kLyapunovWarning) != std::string::npos);
  }

  TEST_CASE("validate: zero fast diffusion is a hard error") {
    auto sys = build_sv({});
    sys.tau1 = constant_field({0.0});
    sys.tau2 = constant_field({0.0});
    CHECK_THROWS_AS((void)validate_system(sys, ProbeGrid::default_for(sys)), ValidationError);
  }

  TEST_CASE("validate: growth exponents of c = y^2") {
    const auto sys = build_sv({});
    const auto rep = validate_system(sys, ProbeGrid::default_for(sys));
    CHECK(rep.growth_exponents.at("c") == doctest::Approx(2.0).epsilon(0.15));
    CHECK(rep.growth_exponents.at("sigma") == doctest::Approx(0.0).epsilon(0.05));
  }

  TEST_CASE("zero drift: one EM step reproduces the Gaussian increment") {
    const auto sys = zero_drift(1.3, 1.0);
    const double eps = 0.04, T = 0.5;
    const auto sched = fixed_schedule(eps, eps / 2.0);
    const std::vector<double> x0{0.7}, y0{0.0};
    SimulationOptions o;
    o.c_step = 1e6;
    const auto path = simulate_pair(sys, sched, x0, y0, T, T, 11, o);
    REQUIRE(path.times.size() == 2);
    RandomStream rng(11, 0, StreamPurpose::path_noise);
    const double dw = std::sqrt(T) * rng.normal();
    CHECK(path.slow_at(1)[0] == doctest::Approx(0.7 + std::sqrt(eps) * 1.3 * dw).epsilon(1e-14));
  }

  TEST_CASE("zero drift: terminal moments") {
    const auto sys = zero_drift(1.0, 1.0);
    const double eps = 0.1, T = 1.0;
    const auto sched = fixed_schedule(eps, eps);
    const std::vector<double> x0{0.0}, y0{0.0};
    const std::size_t n = 4000;
    double s = 0, s2 = 0;
    for (std::size_t p = 0; p < n; ++p) {
      SimulationOptions o;
      o.path_index = p;
      o.c_step = 10.0;
      const auto path = simulate_pair(sys, sched, x0, y0, T, 0.05, 5, o);
      const double x = path.slow.back();
      s += x;
      s2 += x * x;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(eps / n));
    CHECK(std::abs(var - eps) < 3.0 * eps * std::sqrt(2.0 / n));
  }

  TEST_CASE("identical inputs give bit-identical paths") {
    const auto sys = build_sv({});
    const auto sched = fixed_schedule(1e-2, 5e-3);
    const std::vector<double> x0{0.0}, y0{0.5};
    const double dt = step_cap(1e-2, 5e-3);
    const auto a = simulate_pair(sys, sched, x0, y0, 0.1, dt, 9);
    const auto b = simulate_pair(sys, sched, x0, y0, 0.1, dt, 9);
    CHECK(a.slow == b.slow);
    CHECK(a.fast == b.fast);
    CHECK(a.times.front() == 0.0);
    CHECK(a.times.back() == doctest::Approx(0.1));
  }

  TEST_CASE("noise correlation equals rho") {
    SVParams p;
    p.rho = 0.6;
    MultiscaleSystem sys = build_sv(p);
    // freeze everything but the noise so increments are visible directly
    sys.c = constant_field({0.0});
    sys.f = constant_field({0.0});
    const double eps = 1.0, delta = 1.0, dt = 1e-2;
    const auto sched = fixed_schedule(eps, delta);
    const std::vector<double> x0{0.0}, y0{0.0};
    const std::size_t N = 100000;
    SimulationOptions o;
    o.c_step = 10.0;
    const auto path = simulate_pair(sys, sched, x0, y0, N * dt, dt, 21, o);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 1; i < path.times.size(); ++i) {
      const double dx = path.slow[i] - path.slow[i - 1];
      const double dy = path.fast[i] - path.fast[i - 1];
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy) - 0.6) < 3.0 / std::sqrt(double(N)));
  }

  TEST_CASE("sv fast component averages to m") {
    const auto sys = build_sv({});
    const double eps = 1e-3, delta = eps / 2.0;
    const auto sched = fixed_schedule(eps, delta, Regime::regime2, 2.0);
    const std::vector<double> x0{0.0}, y0{0.5};
    const double dt = step_cap(eps, delta);
    const auto path = simulate_pair(sys, sched, x0, y0, 1.0, dt, 4);
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < path.times.size(); ++i) {
      if (path.times[i] < 0.5) continue;
      s += path.fast[i];
      ++n;
    }
    // fast OU relaxes on time delta^2/eps = 2.5e-4; over [0.5, 1] there are ~2000 independent
    // blocks of N(m, 1/2), so the time average has sd ~ 0.7 * sqrt(2 * 2.5e-4 / 0.5)
    CHECK(std::abs(s / n - 0.5) < 3.0 * std::sqrt(0.5) * std::sqrt(2.0 * 2.5e-4 / 0.5));
  }

  TEST_CASE("halving dt changes the terminal mean within the weak-order band") {
    const auto sys = build_sv({});
    const double eps = 1e-1, delta = eps / 2.0;
    const auto sched = fixed_schedule(eps, delta, Regime::regime2, 2.0);
    const std::vector<double> x0{0.0}, y0{0.5};
    const double dt = step_cap(eps, delta);
    const std::size_t n = 400;
    double m1 = 0, m2 = 0;
    for (std::size_t p = 0; p < n; ++p) {
      SimulationOptions o;
      o.path_index = p;
      m1 += simulate_pair(sys, sched, x0, y0, 1.0, dt, 17, o).slow.back();
      m2 += simulate_pair(sys, sched, x0, y0, 1.0, dt / 2.0, 17, o).slow.back();
    }
    // same streams: the difference is dominated by the O(dt) bias
    CHECK(std::abs(m1 / n - m2 / n) < 0.05);
  }

  TEST_CASE("step cap is enforced") {
    const auto sys = build_sv({});
    const auto sched = fixed_schedule(1e-3, 5e-4);
    const std::vector<double> x0{0.0}, y0{0.5};
    CHECK_THROWS_AS((void)simulate_pair(sys, sched, x0, y0, 0.1, 1e-2, 1), std::invalid_argument);
  }

  TEST_CASE("explosion reports the blow-up time") {
    MultiscaleSystem sys = zero_drift(0.0, 1.0);
    sys.c = scalar_field([](double x, double) { return x * x; });
    const auto sched = fixed_schedule(1.0, 1.0);
    const std::vector<double> x0{1.0}, y0{0.0};
    SimulationOptions o;
    o.c_step = 10.0;
    try {
      (void)simulate_pair(sys, sched, x0, y0, 2.0, 1e-3, 1, o);
      FAIL("expected blow-up");
    } catch (const SimulationBlowup& e) {
      CHECK(e.time() > 0.9);
      CHECK(e.time() < 1.1);
    }
  }

  TEST_CASE("short-time rescaling") {
    PhysicalSystem ph;
    ph.c = scalar_field([](double, double y) { return y * y; });
    ph.sigma = constant_field({1.0});
    ph.f = scalar_field([](double, double y) { return 0.5 - y; });
    ph.tau1 = constant_field({0.0});
    ph.tau2 = constant_field({1.0});
    const std::vector<std::vector<double>> xs{{0.0}, {1.0}}, ys{{-1.0}, {0.0}, {2.0}};

    const auto id = rescale_short_time(ph, 1.0);
    CHECK(probe_sup_difference(id.c, ph.c, 1, xs, ys) == 0.0);

    const double eps = 1e-3;
    const auto sc = rescale_short_time(ph, eps);
    const auto scaled_c = scalar_field([](double, double y) { return 1e-3 * y * y; });
    CHECK(probe_sup_difference(sc.c, scaled_c, 1, xs, ys) < 1e-15);
    CHECK_FALSE(sc.has_b());
    CHECK_FALSE(sc.has_g());
  }
}
