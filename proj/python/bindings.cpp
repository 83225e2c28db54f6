#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "fpmt/ablation.hpp"
#include "fpmt/checkpoint.hpp"
#include "fpmt/error.hpp"
#include "fpmt/metrics.hpp"
#include "fpmt/mixing.hpp"
#include "fpmt/pipeline.hpp"

namespace py = pybind11;
using namespace fpmt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<long long, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Dataset to_dataset(const Array& x, const Labels& y) {
  const Matrix m = to_matrix(x);
  if (y.ndim() != 1 || static_cast<std::size_t>(y.shape(0)) != m.rows()) {
    throw DimensionError("labels must be 1-D with one entry per row");
  }
  Dataset ds;
  ds.dim = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const long long l = y.at(static_cast<py::ssize_t>(i));
    if (l != 0 && l != 1 && l != -1) throw DataError("label must be 0, 1 or -1, got " + std::to_string(l));
    auto r = m.row(i);
    ds.samples.push_back({{r.begin(), r.end()}, static_cast<Label>(l), false});
  }
  return ds;
}

py::tuple from_dataset(const Dataset& ds) {
  std::vector<long long> labels(ds.size());
  std::vector<bool> synthetic(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels[i] = static_cast<long long>(ds.samples[i].label);
    synthetic[i] = ds.samples[i].synthetic;
  }
  return py::make_tuple(to_array(ds.features()), py::array(py::cast(labels)), py::array(py::cast(synthetic)));
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["CR"] = m.cr;
  d["DR"] = m.dr;
  d["F1"] = m.f1;
  d["precision"] = m.precision;
  d["TP"] = m.counts.tp;
  d["FP"] = m.counts.fp;
  d["TN"] = m.counts.tn;
  d["FN"] = m.counts.fn;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fpmt, m) {
  m.doc() = "Semi-supervised incident detection: GAN balancing, pseudo-mixup and a three-stage trainer";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", data_error.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("DEFAULT_DELTA") = kDefaultDelta;

  m.def(
      "generate_synthetic",
      [](std::size_t n_normal, std::size_t n_incident, double delta, std::uint64_t seed, std::size_t dim) {
        return from_dataset(generate_synthetic({n_normal, n_incident, dim, delta, seed}));
      },
      py::arg("n_normal"), py::arg("n_incident"), py::arg("delta") = kDefaultDelta, py::arg("seed") = 1,
      py::arg("dim") = 8, "Returns (features, labels, synthetic) arrays.");

  m.def("load_csv", [](const std::filesystem::path& p) { return from_dataset(load_csv(p)); }, py::arg("path"));
  m.def(
      "save_csv",
      [](const std::filesystem::path& p, const Array& x, const Labels& y) { save_csv(to_dataset(x, y), p); },
      py::arg("path"), py::arg("features"), py::arg("labels"));

  m.def(
      "compute_metrics",
      [](const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth) {
        return metrics_dict(compute_metrics(pred, truth));
      },
      py::arg("predictions"), py::arg("truths"));
  m.def("sign_test_p_value", &sign_test_p_value, py::arg("wins"), py::arg("losses"));
  m.def("confidence_lambda", &confidence_lambda, py::arg("o"), py::arg("o_prime"));

  m.def(
      "cross_entropy", [](const Array& t, const Array& p) { return cross_entropy(to_matrix(t), to_matrix(p)); },
      py::arg("targets"), py::arg("probs"));
  m.def(
      "kl_consistency",
      [](const Array& p, const Array& t) { return kl_consistency(to_matrix(p), to_matrix(t)); },
      py::arg("model_probs"), py::arg("targets"), "sum p log(p / t), averaged over rows.");

  m.def(
      "balance_and_expand",
      [](const Array& x, const Labels& y, std::size_t target, std::uint64_t seed, std::size_t steps) {
        GanConfig g;
        g.seed = seed;
        g.steps = steps;
        return from_dataset(balance_and_expand(to_dataset(x, y), target, g));
      },
      py::arg("features"), py::arg("labels"), py::arg("target_per_class"), py::arg("seed") = 1,
      py::arg("gan_steps") = GanConfig{}.steps);

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def("set", &PipelineConfig::set, py::arg("key"), py::arg("value"))
      .def("validate", &PipelineConfig::validate)
      .def_readwrite("stage1_epochs", &PipelineConfig::stage1_epochs)
      .def_readwrite("stage2_epochs", &PipelineConfig::stage2_epochs)
      .def_readwrite("stage3_epochs", &PipelineConfig::stage3_epochs)
      .def_readwrite("batch_size", &PipelineConfig::batch_size)
      .def_readwrite("labels_per_class", &PipelineConfig::labels_per_class)
      .def_readwrite("unlabeled_per_class", &PipelineConfig::unlabeled_per_class)
      .def_readwrite("test_per_class", &PipelineConfig::test_per_class)
      .def_readwrite("depth", &PipelineConfig::depth)
      .def_readwrite("width", &PipelineConfig::width)
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("gan_enabled", &PipelineConfig::gan_enabled)
      .def_readwrite("supervised_only", &PipelineConfig::supervised_only)
      .def_property(
          "variant", [](const PipelineConfig& c) { return to_string(c.variant); },
          [](PipelineConfig& c, const std::string& v) { c.apply_variant(parse_variant(v)); });

  py::class_<Encoder>(m, "Encoder")
      .def("predict_proba", [](const Encoder& e, const Array& x) { return to_array(e.predict_proba(to_matrix(x))); })
      .def("predict", [](const Encoder& e, const Array& x) { return e.predict(to_matrix(x)); })
      .def_property_readonly("depth", [](const Encoder& e) { return e.config().depth; })
      .def_property_readonly("input_dim", [](const Encoder& e) { return e.config().input_dim; });

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("encoder", &RunResult::encoder)
      .def_property_readonly("metrics", [](const RunResult& r) { return metrics_dict(r.metrics); })
      .def_property_readonly("report_csv",
                             [](const RunResult& r) {
                               std::ostringstream out;
                               write_report_csv(r.report, out);
                               return out.str();
                             })
      .def_property_readonly("checkpoint",
                             [](const RunResult& r) {
                               std::ostringstream out;
                               write_checkpoint(out, r.encoder, r.norm);
                               return py::bytes(out.str());
                             })
      .def("save", [](const RunResult& r, const std::filesystem::path& p) { save_checkpoint(p, r.encoder, r.norm); },
           py::arg("path"));

  m.def(
      "run",
      [](const Array& x, const Labels& y, const PipelineConfig& config) {
        const Dataset ds = to_dataset(x, y);
        py::gil_scoped_release release;
        return run_fpmt(ds, config);
      },
      py::arg("features"), py::arg("labels"), py::arg("config"),
      "Standardize, hold out test rows, train all stages and evaluate.");

  // Predictions on raw features: stored normalization is applied first.
  py::class_<Checkpoint>(m, "Model")
      .def_readonly("encoder", &Checkpoint::encoder)
      .def("predict_proba",
           [](const Checkpoint& c, const Array& x) {
             Labels none(x.shape(0));
             std::fill(none.mutable_data(), none.mutable_data() + none.size(), -1);
             Dataset ds = to_dataset(x, none);
             if (!c.norm.empty()) ds = apply_norm(ds, c.norm);
             return to_array(c.encoder.predict_proba(ds.features()));
           })
      .def("evaluate", [](const Checkpoint& c, const Array& x, const Labels& y) {
        Dataset ds = to_dataset(x, y);
        if (!c.norm.empty()) ds = apply_norm(ds, c.norm);
        return metrics_dict(evaluate(c.encoder, ds));
      });

  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"));
}
