#include "lmerepro/cli.hpp"
#include "lmerepro/dataset.hpp"
#include "lmerepro/error.hpp"
#include "lmerepro/inference.hpp"
#include "lmerepro/json_io.hpp"
#include "lmerepro/report.hpp"
#include "lmerepro/simulate.hpp"
#include "lmerepro/text_props.hpp"
#include "lmerepro/vca.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace lmerepro;

namespace {

// Structured results cross the boundary as JSON text; the Python package
// decodes them into plain dicts.
std::string dump(const Json& j) { return j.dump(); }

FitOptions fit_options(const std::string& criterion) {
    FitOptions o;
    o.criterion = parse_criterion(criterion);
    return o;
}

ColumnSchema make_schema(const std::string& response, const std::vector<std::string>& factors,
                         const std::vector<std::string>& covariates, const std::string& object) {
    return ColumnSchema{response, factors, covariates, object.empty() && !factors.empty() ? factors.front() : object};
}

}  // namespace

PYBIND11_MODULE(_lmerepro, m) {
    m.doc() = "Linear mixed-effects analysis of evaluation scores";

    auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<SpecError>(m, "SpecError", data_error.ptr());
    py::register_exception<ParseError>(m, "ParseError", data_error.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<EvalDataset>(m, "Dataset")
        .def_property_readonly("n_obs", &EvalDataset::size)
        .def_property_readonly("response_name", [](const EvalDataset& d) { return d.schema().response; })
        .def_property_readonly("response", &EvalDataset::response)
        .def_property_readonly("object_of_interest", &EvalDataset::object_of_interest)
        .def_property_readonly("covariate_names", &EvalDataset::covariate_names)
        .def("factor_levels", &EvalDataset::factor_levels)
        .def("covariate", [](const EvalDataset& d, const std::string& name) { return d.covariate(name).values; })
        .def("factor", [](const EvalDataset& d, const std::string& name) {
            const auto& f = d.factor(name);
            std::vector<std::string> labels(d.size());
            for (std::size_t i = 0; i < d.size(); ++i) labels[i] = f.label(i);
            return labels;
        })
        .def("fingerprint", [](const EvalDataset& d) { return fingerprint_hex(d.fingerprint()); })
        .def("to_csv", [](const EvalDataset& d) { return to_csv(d); })
        .def("__len__", &EvalDataset::size);

    m.def("parse_csv", [](const std::string& text, const std::string& response, const std::vector<std::string>& factors,
                          const std::vector<std::string>& covariates, const std::string& object) {
              if (factors.empty()) return parse_csv(text, infer_schema(text, response));
              return parse_csv(text, make_schema(response, factors, covariates, object));
          },
          py::arg("text"), py::arg("response"), py::arg("factors") = std::vector<std::string>{},
          py::arg("covariates") = std::vector<std::string>{}, py::arg("object") = "",
          "Parse CSV text. Without factors, column kinds are inferred from the cells.");

    m.def("fit", [](const EvalDataset& ds, const std::string& formula, const std::string& criterion) {
              const auto spec = ModelSpec::parse(formula);
              const auto dm = build_design(ds, spec);
              return dump(to_json(fit(dm, response_vector(ds), fit_options(criterion))));
          },
          py::arg("dataset"), py::arg("formula"), py::arg("criterion") = "reml");

    m.def("glrt", [](const EvalDataset& ds, const std::string& restricted, const std::string& general) {
              return dump(to_json(glrt(ds, ModelSpec::parse(restricted), ModelSpec::parse(general))));
          },
          py::arg("dataset"), py::arg("restricted"), py::arg("general"));

    m.def("vca", [](const EvalDataset& ds, const std::vector<std::string>& random, const std::string& object) {
              return dump(to_json(vca(ds, random, object.empty() ? random.front() : object)));
          },
          py::arg("dataset"), py::arg("random"), py::arg("object") = "");

    m.def("compute_phi", [](const std::map<std::string, double>& components, const std::string& object) {
              const auto r = compute_phi(components, object);
              return py::make_tuple(r.phi, to_string(r.interpretation));
          },
          py::arg("components"), py::arg("object"));

    m.def("text_properties", [](const std::vector<std::string>& texts, const std::vector<std::string>& corpus) {
              const auto stats = build_corpus_stats(corpus.empty() ? texts : corpus);
              std::vector<std::pair<double, double>> out;
              for (const auto& t : texts) {
                  const auto p = text_properties(t, stats);
                  out.emplace_back(p.rarity, p.readability);
              }
              return out;
          },
          py::arg("texts"), py::arg("corpus") = std::vector<std::string>{},
          "(rarity, readability) per text, against the corpus (default: the texts themselves).");

    m.def("simulate", [](const std::string& spec_json) { return simulate(parse_sim_spec_json(spec_json)); },
          py::arg("spec_json"));

    m.def("report", [](const EvalDataset& ds, const std::string& system, const std::vector<std::string>& conditional,
                       bool run_vca) {
              ReportConfig cfg;
              cfg.system_factor = system;
              cfg.covariates = conditional;
              cfg.run_vca = run_vca;
              return dump(to_json(build_report(ds, cfg)));
          },
          py::arg("dataset"), py::arg("system") = "system", py::arg("conditional") = std::vector<std::string>{},
          py::arg("run_vca") = true);

    m.def("run_cli", [](const std::vector<std::string>& args) {
              std::ostringstream out, err;
              int code;
              {
                  py::gil_scoped_release release;
                  code = run_cli(args, out, err);
              }
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"), "Run a CLI subcommand; returns (exit_code, stdout, stderr).");
}
