#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>
#include <vector>

#include "oracle_values.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/sv_example.hpp"

using namespace twoscale;

namespace {

const std::vector<double> kX0{0.0};

InvariantMeasure1D sv_measure(Regime r = Regime::regime1, double gamma = 1.0, std::size_t n = 4001) {
  const auto gen = frozen_generator(build_sv({}), r, gamma, kX0);
  return invariant_density_1d(gen, {0.5 - 6.0, 0.5 + 6.0}, n);
}

}  // namespace

TEST_SUITE("ergodic") {
  TEST_CASE("sv density is the Gaussian N(m, 1/2)") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mu = sv_measure();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double err = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double y = mu.grid[i];
      const double exact = oracle::kDensityPeak * std::exp(-(y - 0.5) * (y - 0.5));
      if (std::abs(y - 0.5) <= 6.0 + 1e-12) err = std::max(err, std::abs(mu.density[i] - exact));
      peak = std::max(peak, mu.density[i]);
      CHECK(mu.density[i] >= 0.0);
    }
    CHECK(err < 1e-8);
    CHECK(peak == doctest::Approx(oracle::kDensityPeak).epsilon(1e-9));
    CHECK(std::abs(mu.mass() - 1.0) < 1e-10);
    CHECK(mu.truncation_mass_bound < 1e-8);
    CHECK(secs < 1.0);
  }

  TEST_CASE("stationarity residuals") {
    const auto mu = sv_measure();
    REQUIRE(mu.stationarity_residual.size() >= 3);
    for (const auto& [name, r] : mu.stationarity_residual) {
      INFO(name);
      CHECK(std::abs(r) < 1e-6);
    }
  }

  TEST_CASE("regime 2 density does not depend on gamma when g = 0") {
    const auto a = sv_measure(Regime::regime2, 2.0);
    const auto b = sv_measure(Regime::regime2, 10.0);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); i += 97) CHECK(a.density[i] == doctest::Approx(b.density[i]).epsilon(1e-12));
  }

  TEST_CASE("averages") {
    const auto mu = sv_measure();
    CHECK(average(scalar_field([](double, double y) { return y * y; }), 1, mu, kX0)[0] ==
          doctest::Approx(oracle::kCbar).epsilon(1e-10));
    CHECK(average(constant_field({1.0}), 1, mu, kX0)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(average(scalar_field([](double, double y) { return y - 0.5; }), 1, mu, kX0)[0]) < 1e-10);
    CHECK_THROWS((void)average(scalar_field([](double, double y) { return y > 0 ? NAN : 0.0; }), 1, mu, kX0));
  }

  TEST_CASE("domain expands until the tail is negligible") {
    const auto gen = frozen_generator(build_sv({}), Regime::regime1, 1.0, kX0);
    const auto mu = invariant_density_1d(gen, {-1.0, 2.0}, 601);
    CHECK(mu.grid.front() < -3.0);
    CHECK(mu.grid.back() > 4.0);
    CHECK(mu.truncation_mass_bound < 1e-8);
  }

  TEST_CASE("non-integrable density is an error") {
    auto sys = build_sv({});
    sys.f = constant_field({0.0});
    const auto gen = frozen_generator(sys, Regime::regime1, 1.0, kX0);
    CHECK_THROWS_AS((void)invariant_density_1d(gen, {-6.0, 6.0}, 1201), NonIntegrableDensity);
  }

  TEST_CASE("Monte Carlo sampler agrees with quadrature") {
    const auto gen = frozen_generator(build_sv({}), Regime::regime1, 1.0, kX0);
    const auto mu = sv_measure();
    const auto s = sample_invariant_mc(gen, 8.0, 4000, 3);
    const auto [mean, mean_se] = s.mean_of([](std::span<const double> y) { return y[0]; });
    CHECK(std::abs(mean - oracle::kMeanY) < 3.0 * mean_se);
    const auto [var, var_se] = s.mean_of([](std::span<const double> y) { return (y[0] - 0.5) * (y[0] - 0.5); });
    CHECK(std::abs(var - oracle::kVarY) < 3.0 * var_se + 0.003);  // EM stationary bias ~ dt/4
    for (int deg = 1; deg <= 4; ++deg) {
      const auto [mc, se] = s.mean_of([deg](std::span<const double> y) { return std::pow(y[0], deg); });
      const double quad = average(scalar_field([deg](double, double y) { return std::pow(y, deg); }), 1, mu, kX0)[0];
      INFO("degree " << deg);
      CHECK(std::abs(mc - quad) < 3.0 * se + 0.01 * std::abs(quad));
    }
  }

  TEST_CASE("density csv") {
    const auto mu = sv_measure(Regime::regime1, 1.0, 11);
    std::ostringstream os;
    write_density_csv(mu, os);
    CHECK(os.str().rfind("y,density\n", 0) == 0);
  }
}
