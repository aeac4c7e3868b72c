#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "thermo/run.hpp"

namespace py = pybind11;

namespace {

// Reports cross the boundary as JSON text; the Python side parses them.
std::string run_text(const std::string& text, const std::string& source, const std::string& out_dir, int steps,
                     double tau) {
  const thermo::RunConfig cfg = thermo::parse_config(text, source);
  thermo::RunOptions opt;
  opt.out_dir = out_dir;
  opt.steps = steps;
  opt.tau = tau;
  thermo::RunResult r;
  {
    py::gil_scoped_release release;
    r = thermo::run(cfg, opt);
  }
  return thermo::report_json(cfg, r).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<thermo::ConfigError>(m, "ConfigError", PyExc_ValueError);
  m.def("list_scenarios", &thermo::list_scenarios);
  m.def("scenario_text", &thermo::scenario_text, py::arg("name"));
  m.def("energy_csv_header", &thermo::energy_csv_header);
  m.def(
      "check_config",
      [](const std::string& text, const std::string& source) {
        const thermo::RunConfig c = thermo::parse_config(text, source);
        py::dict d;
        d["name"] = c.name;
        d["steps"] = c.steps;
        d["tau"] = c.tau;
        d["outer_tol"] = c.problem.solver.tol;
        return d;
      },
      py::arg("text"), py::arg("source") = "<config>");
  m.def("run_config", &run_text, py::arg("text"), py::arg("source") = "<config>", py::arg("out_dir") = "",
        py::arg("steps") = -1, py::arg("tau") = -1.0);
}
