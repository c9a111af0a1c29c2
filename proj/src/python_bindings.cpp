#include "krnet/config_io.hpp"
#include "krnet/density.hpp"
#include "krnet/errors.hpp"
#include "krnet/fp_solver.hpp"
#include "krnet/parallel.hpp"
#include "krnet/problems.hpp"
#include "krnet/runner.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace krnet;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

KRnetModel make_model(const std::string& flow_json) { return KRnetModel(flow_config_from_json(Json::parse(flow_json))); }

Json parse(const std::string& s) {
  try {
    return Json::parse(s);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "KRnet flows, density estimation and steady Fokker-Planck solver";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<SingularError>(m, "SingularError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("version", &version_string);
  m.def("set_num_threads", &set_num_threads, py::arg("threads"));
  m.def("lyapunov_solve", &lyapunov_solve, py::arg("a"), py::arg("d"));
  m.def("problems", [] {
    std::vector<std::string> names;
    for (const auto& [name, entry] : problem_catalog()) names.push_back(name);
    return names;
  });
  m.def(
      "problem_defaults",
      [](const std::string& name) {
        const auto& e = catalog_entry(name);
        return Json{{"flow", to_json(e.flow)}, {"train", to_json(e.train)}, {"description", e.description}}.dump();
      },
      py::arg("name"));
  m.def(
      "exact_log_pdf",
      [](const std::string& name, const RowMatrix& x) {
        return Vector(catalog_entry(name).problem.exact_log_pdf_values(Matrix(x)));
      },
      py::arg("problem"), py::arg("x"));
  m.def(
      "run",
      [](const std::string& command, const std::string& config_json, const std::string& out,
         std::optional<std::uint64_t> seed, int threads) {
        RunOptions o;
        o.seed = seed;
        o.threads = threads;
        o.out = out;
        Json summary;
        {
          py::gil_scoped_release release;
          summary = run_command(command, parse(config_json), o);
        }
        return summary.dump();
      },
      py::arg("command"), py::arg("config_json"), py::arg("out"), py::arg("seed") = py::none(),
      py::arg("threads") = 1);

  py::class_<KRnetModel>(m, "Model")
      .def(py::init(&make_model), py::arg("flow_json"))
      .def_static("load", [](const std::string& path) { return KRnetModel::load(path); }, py::arg("path"))
      .def("save", [](const KRnetModel& self, const std::string& path) { self.save(path); }, py::arg("path"))
      .def("initialize", &KRnetModel::initialize, py::arg("seed"))
      .def("count_parameters", &KRnetModel::count_parameters)
      .def("config_json", [](const KRnetModel& self) { return to_json(self.config()).dump(); })
      .def("parameters",
           [](const KRnetModel& self) {
             const auto v = self.params().values();
             return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
           })
      .def(
          "set_parameters",
          [](KRnetModel& self, const Vector& theta) {
            if (static_cast<std::size_t>(theta.size()) != self.count_parameters()) {
              throw ConfigError("parameter vector has the wrong length");
            }
            self.params().assign(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
          },
          py::arg("theta"))
      .def(
          "forward",
          [](const KRnetModel& self, const RowMatrix& x) {
            Vector ld;
            Matrix z = self.forward_values(Matrix(x), ld);
            return std::make_pair(z, ld);
          },
          py::arg("x"))
      .def("inverse", [](const KRnetModel& self, const RowMatrix& z) { return self.inverse(Matrix(z)); }, py::arg("z"))
      .def("log_pdf", [](const KRnetModel& self, const RowMatrix& x) { return log_pdf(self, Matrix(x)); }, py::arg("x"))
      .def(
          "sample",
          [](const KRnetModel& self, std::size_t n, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return sample(self, n, rng).x;
          },
          py::arg("n"), py::arg("seed") = 0)
      .def(
          "cross_entropy",
          [](const KRnetModel& self, const RowMatrix& x) {
            const auto lg = cross_entropy_gradient(self, Matrix(x));
            return std::make_pair(lg.value, Vector(Eigen::Map<const Vector>(
                                                lg.gradient.data(), static_cast<Eigen::Index>(lg.gradient.size()))));
          },
          py::arg("x"), "cross entropy and its parameter gradient")
      .def(
          "fp_residual",
          [](const KRnetModel& self, const std::string& problem, const RowMatrix& x, double scale) {
            const ResidualOperator op(catalog_entry(problem).problem, scale);
            return residual_values(self, op, Matrix(x));
          },
          py::arg("problem"), py::arg("x"), py::arg("residual_scale") = 100.0);
}
