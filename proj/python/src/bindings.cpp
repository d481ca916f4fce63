#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "twoscale/cell_poisson.hpp"
#include "twoscale/config.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/fluctuation.hpp"
#include "twoscale/homogenize.hpp"
#include "twoscale/pipeline.hpp"
#include "twoscale/schedule.hpp"
#include "twoscale/stat_verify.hpp"
#include "twoscale/sv_example.hpp"

namespace py = pybind11;
using namespace twoscale;

namespace {

SVParams sv_params(double m, double rho, double gamma) {
  SVParams p;
  p.m = m;
  p.rho = rho;
  p.gamma = gamma;
  return p;
}

HomogenizedModel sv_model(double m, double rho, double gamma, int regime) {
  const auto p = sv_params(m, rho, gamma);
  HomogenizeOptions o;
  o.domain = {m - 6.0, m + 6.0};
  const Regime r = regime == 1 ? Regime::regime1 : Regime::regime2;
  return HomogenizedModel(build_sv(p), r, r == Regime::regime2 ? gamma : 1.0, o);
}

}  // namespace

PYBIND11_MODULE(_twoscale, mod) {
  mod.doc() = "fast-slow diffusion homogenization and fluctuation tools";
  mod.attr("__version__") = kToolVersion;

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<ScheduleError>(mod, "ScheduleError", PyExc_ValueError);

  py::enum_<Regime>(mod, "Regime").value("regime1", Regime::regime1).value("regime2", Regime::regime2);
  py::enum_<EllClass>(mod, "EllClass")
      .value("zero", EllClass::zero)
      .value("finite", EllClass::finite)
      .value("infinite", EllClass::infinite);

  py::class_<DeltaRule>(mod, "DeltaRule")
      .def_static("power", &DeltaRule::power, py::arg("a"), py::arg("p"))
      .def_static("ratio", &DeltaRule::ratio)
      .def("delta", &DeltaRule::delta, py::arg("epsilon"), py::arg("gamma"))
      .def("__repr__", &DeltaRule::describe);

  py::class_<ScaleSchedule>(mod, "ScaleSchedule")
      .def_readonly("epsilon", &ScaleSchedule::epsilon)
      .def_readonly("delta", &ScaleSchedule::delta)
      .def_readonly("regime", &ScaleSchedule::regime)
      .def_readonly("gamma", &ScaleSchedule::gamma)
      .def_readonly("theta", &ScaleSchedule::theta)
      .def_readonly("ell", &ScaleSchedule::ell)
      .def_readonly("ell_class", &ScaleSchedule::ell_class)
      .def_readonly("beta", &ScaleSchedule::beta)
      .def_property_readonly("drift_weight", &ScaleSchedule::drift_weight)
      .def_property_readonly("noise_on", &ScaleSchedule::noise_on);

  mod.def("classify_schedule", &classify_schedule, py::arg("epsilon"), py::arg("rule"), py::arg("regime"),
          py::arg("gamma") = 0.0, py::arg("regime_threshold") = kDefaultRegimeThreshold);

  mod.def(
      "sv_density",
      [](double m, std::size_t n_grid) {
        const auto gen = frozen_generator(build_sv(sv_params(m, 0.0, 2.0)), Regime::regime1, 1.0,
                                          std::vector<double>{0.0});
        const auto mu = invariant_density_1d(gen, {m - 6.0, m + 6.0}, n_grid);
        return py::make_tuple(mu.grid, mu.density);
      },
      py::arg("m") = 0.5, py::arg("n_grid") = 4001, "grid and stationary density of the fast process");

  mod.def(
      "sv_corrector",
      [](double m, double gamma, std::size_t n_grid) {
        const auto p = sv_params(m, 0.0, gamma);
        const auto gen = frozen_generator(build_sv(p), Regime::regime1, 1.0, std::vector<double>{0.0});
        const auto mu = invariant_density_1d(gen, {m - 6.0, m + 6.0}, n_grid);
        const double cbar = cbar_closed_form(p);
        const auto sol =
            solve_cell_1d(gen, scalar_field([&](double, double y) { return (y * y - cbar) / gamma; }), 1, mu);
        return py::make_tuple(sol.grid, sol.values[0]);
      },
      py::arg("m") = 0.5, py::arg("gamma") = 2.0, py::arg("n_grid") = 4001,
      "quadrature solution of the quadratic-cost corrector");

  mod.def(
      "sv_averages",
      [](double m, double rho, double gamma, int regime) {
        const auto model = sv_model(m, rho, gamma, regime);
        const std::vector<double> x{0.0};
        py::dict d;
        d["lambda_bar"] = model.lambda_bar(x)[0];
        d["J_bar"] = model.J_bar(x)[0];
        d["q_bar"] = model.q_bar(x)[0];
        return d;
      },
      py::arg("m") = 0.5, py::arg("rho") = 0.0, py::arg("gamma") = 2.0, py::arg("regime") = 2);

  mod.def("phi2_closed_form", [](double y, double m, double gamma) { return phi2_closed_form(y, sv_params(m, 0.0, gamma)); },
          py::arg("y"), py::arg("m") = 0.5, py::arg("gamma") = 2.0);
  mod.def("qbar2_closed_form",
          [](double m, double rho, double gamma) { return qbar2_closed_form(sv_params(m, rho, gamma)); },
          py::arg("m") = 0.5, py::arg("rho") = 0.0, py::arg("gamma") = 2.0);
  mod.def("ldp_rate", [](double x1, double q, double x0) { return ldp_rate(x1, LDPRate{q, x0}); }, py::arg("x1"),
          py::arg("q") = 1.0, py::arg("x0") = 0.0);

  mod.def(
      "ou_covariance",
      [](double a, double q, double T, double dt) {
        const std::vector<double> A{a}, J{0.0}, Q{q};
        return ou_covariance(ou_limit_constant(A, J, Q, T, 0.0, true), T, dt).terminal()[0];
      },
      py::arg("a"), py::arg("q"), py::arg("T") = 1.0, py::arg("dt") = 1e-3, "scalar Lyapunov solution at T");

  mod.def(
      "ks_gaussian",
      [](const std::vector<double>& x, double mean, double var) {
        const auto r = ks_gaussian(x, mean, var);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("samples"), py::arg("mean"), py::arg("variance"));

  mod.def(
      "run_config",
      [](const std::string& path, std::optional<std::vector<std::string>> checks, std::optional<std::string> out,
         std::optional<std::uint64_t> seed, bool write_files) {
        auto cfg = load_config(path);
        ConfigOverrides o;
        o.checks = checks;
        o.output = out;
        o.seed = seed;
        apply_overrides(cfg, o);
        PipelineOptions po;
        po.write_files = write_files;
        py::gil_scoped_release release;
        return run_pipeline(cfg, po).report.dump();
      },
      py::arg("path"), py::arg("checks") = py::none(), py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("write_files") = false, "runs a config and returns report.json text");
}
