#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>
#include <vector>

#include "oracle_values.hpp"
#include "twoscale/cell_poisson.hpp"
#include "twoscale/sv_example.hpp"

using namespace twoscale;

namespace {

const std::vector<double> kX0{0.0};

struct Setup {
  SVParams p;
  FrozenGenerator gen;
  InvariantMeasure1D mu;
  Setup() : gen(frozen_generator(build_sv(p), Regime::regime1, 1.0, kX0)), mu(invariant_density_1d(gen, {-5.5, 6.5}, 4001)) {}
};

VectorField phi2_rhs() {
  return scalar_field([](double, double y) { return (y * y - oracle::kCbar) / 2.0; });
}

}  // namespace

TEST_SUITE("cell_poisson") {
  TEST_CASE("quadrature solution matches the closed-form corrector") {
    const Setup s;
    const auto sol = solve_cell_1d(s.gen, phi2_rhs(), 1, s.mu);
    double err = 0.0;
    for (std::size_t i = 0; i < sol.grid.size(); ++i) {
      if (std::abs(sol.grid[i] - 0.5) <= 4.0) err = std::max(err, std::abs(sol.values[0][i] - phi2_closed_form(sol.grid[i], s.p)));
    }
    CHECK(err < 1e-6);
    CHECK(sol.value(0, 0.0) == doctest::Approx(oracle::kPhi2At0).epsilon(1e-7));
    CHECK(sol.derivative(0, 1.0) == doctest::Approx(phi2_closed_form_derivative(1.0, s.p)).epsilon(1e-6));
    CHECK(sol.centering_residual < 1e-8);
    CHECK(sol.generator_residual < 1e-6);
    CHECK(sol.growth_exponent_fit == doctest::Approx(2.0).epsilon(0.15));
  }

  TEST_CASE("regime 2 generator with the unscaled right-hand side gives the same corrector") {
    const Setup s;
    const auto gen2 = frozen_generator(build_sv(s.p), Regime::regime2, 2.0, kX0);
    const auto mu2 = invariant_density_1d(gen2, {-5.5, 6.5}, 4001);
    const auto sol = solve_cell_1d(gen2, scalar_field([](double, double y) { return y * y - oracle::kCbar; }), 1, mu2);
    CHECK(sol.value(0, 0.5) == doctest::Approx(oracle::kPhi2AtM).epsilon(1e-7));
  }

  TEST_CASE("zero right-hand side gives zero") {
    const Setup s;
    const auto sol = solve_cell_1d(s.gen, constant_field({0.0}), 1, s.mu);
    for (double v : sol.values[0]) CHECK(v == 0.0);
  }

  TEST_CASE("uncentered right-hand side is rejected") {
    const Setup s;
    try {
      (void)solve_cell_1d(s.gen, constant_field({1.0}), 1, s.mu);
      FAIL("expected a centering error");
    } catch (const CenteringError& e) {
      CHECK(std::string(e.what()).find("centering condition violated") != std::string::npos);
    }
  }

  TEST_CASE("recentering is idempotent") {
    const Setup s;
    auto sol = solve_cell_1d(s.gen, phi2_rhs(), 1, s.mu);
    auto u = sol.values[0];
    recenter(u, s.mu);
    double diff = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) diff = std::max(diff, std::abs(u[i] - sol.values[0][i]));
    CHECK(diff < 1e-12);
  }

  TEST_CASE("chi: b = 0 gives zero, b = y - m gives y - m, b = 1 fails") {
    Setup s;
    auto sys = build_sv(s.p);
    const auto zero = chi_solution(sys, s.mu, kX0);
    for (double v : zero.values[0]) CHECK(v == 0.0);

    sys.b = scalar_field([](double, double y) { return y - 0.5; });
    const auto chi = chi_solution(sys, s.mu, kX0);
    double err = 0.0;
    for (std::size_t i = 0; i < chi.grid.size(); ++i) {
      if (std::abs(chi.grid[i] - 0.5) <= 4.0) err = std::max(err, std::abs(chi.values[0][i] - (chi.grid[i] - 0.5)));
    }
    CHECK(err < 1e-6);

    sys.b = constant_field({1.0});
    try {
      (void)chi_solution(sys, s.mu, kX0);
      FAIL("expected a centering error");
    } catch (const CenteringError& e) {
      CHECK(std::string(e.what()).find("int b dmu_1 = 0") != std::string::npos);
    }
  }

  TEST_CASE("Feynman-Kac Monte Carlo at y = m") {
    const Setup s;
    const std::vector<std::vector<double>> pts{{0.5}};
    const auto est = solve_cell_mc(
        s.gen, [](std::span<const double> y) { return (y[0] * y[0] - oracle::kCbar) / 2.0; }, pts, 6.0, 4000, 5,
        McCellOptions{0.01});
    CHECK(std::abs(est.values[0] - oracle::kPhi2AtM) < 3.0 * est.std_errors[0] + 0.005);
    CHECK(est.horizon_adequate);
  }

  TEST_CASE("Feynman-Kac Monte Carlo with G = 0") {
    const Setup s;
    const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    const auto est = solve_cell_mc(s.gen, [](std::span<const double>) { return 0.0; }, pts, 2.0, 200, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(est.values[i] == 0.0);
      CHECK(est.std_errors[i] == 0.0);
    }
  }

  TEST_CASE("centered cubic: quadrature and Feynman-Kac agree") {
    const Setup s;
    // E(y - m)^3 = 0 under the symmetric Gaussian, so G = (y - m)^3 is centered
    const auto sol = solve_cell_1d(s.gen, scalar_field([](double, double y) { return std::pow(y - 0.5, 3); }), 1, s.mu);
    const std::vector<std::vector<double>> pts{{-0.5}, {0.0}, {0.5}, {1.0}, {1.5}};
    const auto est = solve_cell_mc(
        s.gen, [](std::span<const double> y) { return std::pow(y[0] - 0.5, 3); }, pts, 6.0, 2000, 8, McCellOptions{0.01});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      INFO("y = " << pts[i][0]);
      CHECK(std::abs(est.values[i] - sol.value(0, pts[i][0])) < 3.5 * est.std_errors[i] + 0.01);
    }
  }

  TEST_CASE("growth fits") {
    std::vector<double> grid, quad, flat, ex;
    for (int i = 0; i <= 2000; ++i) {
      const double y = -10.0 + 0.01 * i;
      grid.push_back(y);
      quad.push_back(0.5 * y * y + y);
      flat.push_back(3.0);
      ex.push_back(std::exp(y));
    }
    CHECK(fit_growth(grid, quad).exponent == doctest::Approx(2.0).epsilon(0.1));
    CHECK_FALSE(fit_growth(grid, quad).super_polynomial);
    CHECK(std::abs(fit_growth(grid, flat).exponent) < 1e-12);
    CHECK(fit_growth(grid, ex).super_polynomial);

    const Setup s;
    auto sol = solve_cell_1d(s.gen, phi2_rhs(), 1, s.mu);
    const auto rep = validate_growth(sol);
    CHECK(rep.fits.at("u").exponent == doctest::Approx(2.0).epsilon(0.15));
    CHECK_FALSE(rep.super_polynomial);
  }

  TEST_CASE("x derivatives by finite differences") {
    // family u(x, y) = 2 x^2 Phi2(y): d/dx = 0 and d2/dx2 = 4 Phi2 at x = 0
    Setup s;
    const auto family = [&](std::span<const double> x) {
      const double xv = x[0];
      return solve_cell_1d(s.gen, scalar_field([xv](double, double y) { return xv * xv * (y * y - oracle::kCbar); }), 1,
                           s.mu);
    };
    auto sol = family(kX0);
    fill_x_derivatives(sol, family);
    for (std::size_t i = 0; i < sol.grid.size(); i += 250) {
      if (std::abs(sol.grid[i] - 0.5) > 4.0) continue;
      CHECK(std::abs(sol.d_dx[0][0][i]) < 1e-9);
      CHECK(std::abs(sol.d2_dx2[0][0][i] - 4.0 * phi2_closed_form(sol.grid[i], s.p)) < 1e-5);
      CHECK(std::abs(sol.d2_dxdy[0][0][i]) < 1e-9);
    }
  }

  TEST_CASE("cell csv") {
    const Setup s;
    const auto sol = solve_cell_1d(s.gen, phi2_rhs(), 1, s.mu);
    std::ostringstream os;
    write_cell_csv(sol, 0, os);
    CHECK(os.str().rfind("y,u,du_dy\n", 0) == 0);
  }
}
