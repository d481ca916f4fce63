#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracle_values.hpp"
#include "twoscale/fluctuation.hpp"
#include "twoscale/stat_verify.hpp"
#include "twoscale/sv_example.hpp"

using namespace twoscale;

namespace {

HomogenizeOptions sv_options() {
  HomogenizeOptions o;
  o.domain = {-5.5, 6.5};
  return o;
}

double band(double sigma, std::size_t n) { return 3.0 * sigma * std::sqrt(2.0 / static_cast<double>(n - 1)); }

}  // namespace

TEST_SUITE("fluctuation") {
  TEST_CASE("dyadic times") {
    const auto t = dyadic_times(1.0);
    REQUIRE(t.size() == 5);
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 0.125);
    CHECK(t[4] == 1.0);
  }

  TEST_CASE("eta ensemble: eta_0 = 0, summary matches raw paths, variance near qbar") {
    const auto sys = build_sv({});
    const HomogenizedModel model(sys, Regime::regime2, 2.0, sv_options());
    const std::vector<double> x0{0.0}, y0{0.5};
    const auto orbit = solve_limit_ode(model, x0, 1.0, 1e-2);
    const auto sched = classify_schedule(1e-2, DeltaRule::ratio(), Regime::regime2, 2.0);
    SimulationOptions sim;
    sim.scheme = FastScheme::exponential;
    EnsembleOptions eo;
    eo.sim = sim;
    const std::size_t n = 1000;
    const auto ens = eta_ensemble(sys, sched, orbit, y0, 1.0, 0.1 * sched.delta * sched.delta / sched.epsilon, n, 3, eo);
    REQUIRE(ens.times.size() == 5);
    for (std::size_t p = 0; p < n; ++p) CHECK(ens.at(p, 0, 0) == 0.0);
    const auto term = ens.marginal(4);
    double s = 0;
    for (double v : term) s += v;
    CHECK(ens.summary.mean[4][0] == doctest::Approx(s / n).epsilon(1e-12));
    const auto mom = moment_report(term);
    CHECK(ens.summary.cov[4][0][0] == doctest::Approx(mom.variance.value).epsilon(1e-10));
    // eps = 1e-2 is far from the limit; only a loose check here, the tight one is an acceptance test
    CHECK(std::abs(mom.variance.value - oracle::kQbar2) < 0.25 * oracle::kQbar2);
  }

  TEST_CASE("deterministic system gives eta = 0") {
    auto sys = build_sv({});
    sys.sigma = constant_field({0.0});
    sys.c = constant_field({0.75});
    sys.tau1 = constant_field({0.0});
    sys.tau2 = constant_field({1.0});
    const auto orbit = solve_limit_ode([](std::span<const double>) { return std::vector<double>{0.75}; },
                                       std::vector<double>{0.0}, 1.0, 1e-2);
    const auto sched = fixed_schedule(1e-2, 5e-3, Regime::regime2, 2.0);
    EnsembleOptions eo;
    eo.sim.scheme = FastScheme::exponential;
    const auto ens = eta_ensemble(sys, sched, orbit, std::vector<double>{0.5}, 1.0, 1e-3, 20, 1, eo);
    for (double v : ens.eta) CHECK(std::abs(v) < 1e-10);
  }

  TEST_CASE("zero beta is rejected") {
    const auto sys = build_sv({});
    auto sched = fixed_schedule(1e-2, 5e-3);
    sched.beta = 0.0;
    const auto orbit = solve_limit_ode([](std::span<const double>) { return std::vector<double>{0.75}; },
                                       std::vector<double>{0.0}, 1.0, 1e-2);
    CHECK_THROWS_AS((void)eta_ensemble(sys, sched, orbit, std::vector<double>{0.5}, 1.0, 1e-4, 2, 1), std::invalid_argument);
  }

  TEST_CASE("limit OU with zero drift is scaled Brownian motion") {
    const std::vector<double> A{0.0}, J{0.0}, q{1.375};
    const auto lim = ou_limit_constant(A, J, q, 1.0, 0.0, true);
    const std::size_t n = 2000;
    const auto ens = simulate_limit_ou(lim, 1.0, 1e-2, n, 9);
    const auto mom = moment_report(ens.marginal(ens.times.size() - 1));
    CHECK(std::abs(mom.variance.value - 1.375) < band(1.375, n));
    const auto cov = ou_covariance(lim, 1.0, 1e-2);
    CHECK(cov.at(0)[0] == 0.0);
    CHECK(cov.terminal()[0] == doctest::Approx(1.375).epsilon(1e-12));
  }

  TEST_CASE("ell = 0: noise off, eta is the drift response") {
    const std::vector<double> A{0.0}, J{2.0}, q{1.0};
    const auto lim = ou_limit_constant(A, J, q, 1.0, 1.0, false);
    const auto ens = simulate_limit_ou(lim, 1.0, 1e-2, 5, 1);
    for (std::size_t p = 0; p < 5; ++p) CHECK(ens.paths[(p * ens.times.size() + ens.times.size() - 1)] == doctest::Approx(2.0));
    CHECK(ou_mean(lim, 1.0, 1e-2)[0] == doctest::Approx(2.0));
    CHECK_THROWS((void)ou_covariance(lim, 1.0, 1e-2));
  }

  TEST_CASE("Duhamel: constant fundamental solution when A = 0") {
    const std::vector<double> A{0.0}, J{0.5}, q{1.0};
    const auto lim = ou_limit_constant(A, J, q, 1.0, 1.0, true);
    const auto d = duhamel_solution(lim, 1.0, 1e-2, 10, 4);
    for (double v : d.Psi) CHECK(v == doctest::Approx(1.0));
    CHECK(d.H.back() == doctest::Approx(0.5));
    const auto direct = simulate_limit_ou(lim, 1.0, 1e-2, 10, 4);
    const auto a = direct.marginal(direct.times.size() - 1);
    const auto b = d.eta.marginal(d.eta.times.size() - 1);
    for (std::size_t p = 0; p < 10; ++p) CHECK(a[p] == doctest::Approx(b[p]).epsilon(1e-10));
  }

  TEST_CASE("Duhamel with A = -1") {
    const std::vector<double> A{-1.0}, J{0.0}, q{1.0};
    const auto lim = ou_limit_constant(A, J, q, 1.0, 0.0, true);
    const auto d = duhamel_solution(lim, 1.0, 1e-4, 2000, 12);
    double err = 0.0;
    for (std::size_t i = 0; i < d.times.size(); ++i) err = std::max(err, std::abs(d.Psi[i] - std::exp(-d.times[i])));
    CHECK(err < 1e-8);
    const auto cov = ou_covariance(lim, 1.0, 1e-3);
    CHECK(std::abs(cov.terminal()[0] - oracle::kLyapunovT1) < 1e-8);
    const auto mom = moment_report(d.eta.marginal(d.eta.times.size() - 1));
    CHECK(std::abs(mom.variance.value - oracle::kLyapunovT1) < band(oracle::kLyapunovT1, 2000));
  }

  TEST_CASE("Duhamel: 2x2 matrix exponential") {
    const std::vector<double> A{-1.0, 2.0, 0.0, -3.0}, J{0.0, 0.0}, q{1.0, 0.0, 0.0, 1.0};
    const auto lim = ou_limit_constant(A, J, q, 0.5, 0.0, true);
    const auto d = duhamel_solution(lim, 0.5, 1e-4, 2, 1);
    // exp(At) for upper-triangular A: [[e^-t, e^-t - e^-3t], [0, e^-3t]]
    const double t = d.times.back();
    const double* P = d.Psi.data() + (d.times.size() - 1) * 4;
    CHECK(std::abs(P[0] - std::exp(-t)) < 1e-8);
    CHECK(std::abs(P[1] - (std::exp(-t) - std::exp(-3 * t))) < 1e-8);
    CHECK(std::abs(P[2]) < 1e-12);
    CHECK(std::abs(P[3] - std::exp(-3 * t)) < 1e-8);
  }

  TEST_CASE("ill-conditioned fundamental solution is an error") {
    const std::vector<double> A{30.0, 0.0, 0.0, -30.0}, J{0.0, 0.0}, q{1.0, 0.0, 0.0, 1.0};
    const auto lim = ou_limit_constant(A, J, q, 1.0, 0.0, true);
    CHECK_THROWS_AS((void)duhamel_solution(lim, 1.0, 1e-3, 2, 1), std::runtime_error);
  }

  TEST_CASE("time-dependent coefficients are interpolated") {
    const auto lim = ou_limit(
        1, [](double) { return std::vector<double>{0.0}; }, [](double) { return std::vector<double>{0.0}; },
        [](double t) { return std::vector<double>{2.0 * t}; }, 1.0, 100, 0.0, true);
    CHECK(std::abs(ou_covariance(lim, 1.0, 1e-3).terminal()[0] - 1.0) < 1e-8);
  }

  TEST_CASE("ensemble json and terminal csv") {
    const auto sys = build_sv({});
    const auto orbit = solve_limit_ode([](std::span<const double>) { return std::vector<double>{0.75}; },
                                       std::vector<double>{0.0}, 1.0, 1e-2);
    const auto sched = classify_schedule(1e-1, DeltaRule::ratio(), Regime::regime2, 2.0);
    const auto ens = eta_ensemble(sys, sched, orbit, std::vector<double>{0.5}, 1.0, step_cap(1e-1, 5e-2), 3, 1);
    std::ostringstream js, csv;
    write_ensemble_json(ens, std::vector<double>{0.1, 0.1, 0.1, 0.1}, js);
    const auto j = nlohmann::json::parse(js.str());
    for (const char* key : {"epsilon", "regime", "beta", "ell", "times", "mean", "cov", "ks"}) CHECK(j.contains(key));
    CHECK(j["ell"] == "inf");
    write_terminal_csv(ens, csv);
    CHECK(csv.str().rfind("path_id,eta_value\n", 0) == 0);
  }
}
