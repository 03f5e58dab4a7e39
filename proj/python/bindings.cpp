#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "xmaml/checkpoint.hpp"
#include "xmaml/commands.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/eval.hpp"
#include "xmaml/losses.hpp"
#include "xmaml/meta.hpp"
#include "xmaml/selftest.hpp"
#include "xmaml/stats.hpp"
#include "xmaml/typology.hpp"

namespace py = pybind11;
using namespace xmaml;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

Batch make_batch(const Array& x, const Array& y) {
  if (x.ndim() != 2) throw StructureError("inputs must be a 2-d array");
  const auto n = static_cast<std::size_t>(x.shape(0));
  const auto d = static_cast<std::size_t>(x.shape(1));
  if (static_cast<std::size_t>(y.size()) != n) throw StructureError("one target per input row");
  Batch b;
  b.inputs = Tensor::zeros({n, d});
  std::copy(x.data(), x.data() + x.size(), b.inputs.data().begin());
  b.targets = to_vector(y);
  return b;
}

ParamVector params_from(const ModelSpec& spec, const Array& flat) {
  const ParamVector shape = init_model(spec, 0).params;
  if (static_cast<std::size_t>(flat.size()) != shape.total_dim()) {
    throw StructureError("expected " + std::to_string(shape.total_dim()) + " parameters");
  }
  const auto v = to_vector(flat);
  return shape.unflatten(v);
}

py::dict test_dict(const TTestResult& r) {
  py::dict d;
  d["t"] = r.t;
  d["df"] = r.df;
  d["p"] = r.p;
  d["zero_variance"] = r.zero_variance;
  return d;
}

}  // namespace

PYBIND11_MODULE(_xmaml, m) {
  m.doc() = "X-MAML meta-learning engine: exact second-order MAML, evaluation and typology statistics.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<StructureError>(m, "StructureError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<StaleCheckpointError>(m, "StaleCheckpointError", base.ptr());
  py::register_exception<InsufficientSamplesError>(m, "InsufficientSamplesError", base.ptr());
  py::register_exception<InsufficientLanguagesError>(m, "InsufficientLanguagesError", base.ptr());

  py::enum_<Activation>(m, "Activation").value("tanh", Activation::tanh).value("relu", Activation::relu);
  py::enum_<TaskKind>(m, "TaskKind")
      .value("classification", TaskKind::classification)
      .value("regression", TaskKind::regression);
  py::enum_<Order>(m, "Order").value("full", Order::full).value("first", Order::first);
  py::enum_<Condition>(m, "Condition").value("value", Condition::value).value("match", Condition::match);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim,
                       Activation activation, TaskKind kind) {
             ModelSpec s{input_dim, std::move(hidden), output_dim, activation, kind};
             s.validate();
             return s;
           }),
           py::arg("input_dim"), py::arg("hidden_dims"), py::arg("output_dim"),
           py::arg("activation") = Activation::tanh, py::arg("task_kind") = TaskKind::classification)
      .def_readonly("input_dim", &ModelSpec::input_dim)
      .def_readonly("hidden_dims", &ModelSpec::hidden_dims)
      .def_readonly("output_dim", &ModelSpec::output_dim)
      .def_property_readonly("total_dim", &ModelSpec::total_dim);

  m.def(
      "init_params", [](const ModelSpec& spec, std::uint64_t seed) { return to_array(init_model(spec, seed).params.flatten()); },
      py::arg("spec"), py::arg("seed"), "Glorot-uniform initial parameters, flattened.");

  m.def(
      "task_loss",
      [](const ModelSpec& spec, const Array& params, const Array& x, const Array& y) {
        return task_loss(Model{spec, params_from(spec, params)}, make_batch(x, y));
      },
      py::arg("spec"), py::arg("params"), py::arg("x"), py::arg("y"));

  m.def(
      "meta_gradient",
      [](const ModelSpec& spec, const Array& params, const Array& xs, const Array& ys, const Array& xq,
         const Array& yq, double alpha, std::size_t steps, Order order) {
        const Batch sup = make_batch(xs, ys);
        const Batch qry = make_batch(xq, yq);
        const LossFn ls = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, sup); };
        const LossFn lq = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, qry); };
        MetaGradient g;
        {
          py::gil_scoped_release release;
          g = meta_gradient(ls, lq, params_from(spec, params), alpha, steps, order);
        }
        return py::make_tuple(to_array(g.gradient.flatten()), g.query_loss);
      },
      py::arg("spec"), py::arg("params"), py::arg("support_x"), py::arg("support_y"), py::arg("query_x"),
      py::arg("query_y"), py::arg("alpha"), py::arg("steps") = 1, py::arg("order") = Order::full,
      "Gradient of the query loss after `steps` inner steps on the support set. Returns (grad, query_loss).");

  m.def(
      "inner_adapt",
      [](const ModelSpec& spec, const Array& params, const Array& x, const Array& y, double alpha,
         std::size_t steps) {
        const Batch b = make_batch(x, y);
        const LossFn l = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, b); };
        return to_array(inner_adapt(params_from(spec, params), l, alpha, steps).flatten());
      },
      py::arg("spec"), py::arg("params"), py::arg("x"), py::arg("y"), py::arg("alpha"), py::arg("steps") = 1);

  m.def(
      "sinusoid_episode",
      [](std::uint64_t seed, std::size_t k, std::size_t q) {
        Rng rng(seed);
        const Episode e = gen_sinusoid_episode(rng, k, q);
        const auto arr = [](const Batch& b) {
          Array x({static_cast<py::ssize_t>(b.size()), py::ssize_t{1}});
          std::copy(b.inputs.data().begin(), b.inputs.data().end(), x.mutable_data());
          return py::make_tuple(x, to_array(b.targets));
        };
        return py::make_tuple(arr(e.support), arr(e.query));
      },
      py::arg("seed"), py::arg("k"), py::arg("q"), "((support_x, support_y), (query_x, query_y))");

  m.def(
      "paired_t_test", [](const std::vector<double>& a, const std::vector<double>& b) { return test_dict(paired_t_test(a, b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "corrected_resampled_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b, double ratio) {
        return test_dict(corrected_resampled_t_test(a, b, ratio));
      },
      py::arg("a"), py::arg("b"), py::arg("test_train_ratio"));
  m.def("bonferroni", &bonferroni, py::arg("base_cutoff"), py::arg("m"));
  m.def("student_t_cdf", &student_t_cdf, py::arg("t"), py::arg("df"));
  m.def("regularized_incomplete_beta", &regularized_incomplete_beta, py::arg("a"), py::arg("b"), py::arg("x"));

  m.def(
      "aggregate_scores",
      [](const std::string& target, const std::vector<std::pair<std::string, double>>& cells) {
        const RowAggregate r = aggregate_scores(target, cells);
        py::dict d;
        d["avg"] = r.avg;
        d["max"] = r.max;
        d["argmax"] = r.argmax_aux;
        return d;
      },
      py::arg("target"), py::arg("cells"));

  m.def(
      "planted_scan",
      [](std::uint64_t seed, std::size_t num_languages, bool planted, Condition condition, std::size_t splits) {
        PlantedTypologySpec spec;
        spec.seed = seed;
        spec.num_languages = num_languages;
        spec.planted = planted;
        ScanOptions opts;
        opts.splits = splits;
        ScanReport rep;
        {
          py::gil_scoped_release release;
          const PlantedTypology pt = make_planted_typology(spec);
          rep = run_feature_scan(pt.table, pt.matrix, condition, seed, opts);
        }
        py::list out;
        for (const auto& r : rep.results) {
          py::dict d;
          d["feature"] = r.feature_id;
          d["t"] = r.t_statistic;
          d["p"] = r.p_value;
          d["cutoff"] = r.corrected_cutoff;
          d["significant"] = r.significant;
          out.append(d);
        }
        return out;
      },
      py::arg("seed"), py::arg("num_languages") = 24, py::arg("planted") = true,
      py::arg("condition") = Condition::value, py::arg("splits") = 20,
      "Feature scan over a synthetic typology; feature P carries the planted signal.");

  m.def(
      "typology_scan",
      [](const std::filesystem::path& wals, const std::filesystem::path& matrix, Condition condition,
         std::uint64_t seed, const std::filesystem::path& out_dir) {
        return cmd_typology(wals, matrix, condition, seed, out_dir).files;
      },
      py::arg("wals"), py::arg("matrix"), py::arg("condition"), py::arg("seed"), py::arg("out_dir"));

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        const Checkpoint c = load_checkpoint(path);
        return py::make_tuple(c.config_hash, to_array(c.params.flatten()));
      },
      py::arg("path"), "(config_hash, flat params)");

  m.def("synth", [](const std::filesystem::path& dir, std::uint64_t seed) { return cmd_synth(dir, seed).files; },
        py::arg("out_dir"), py::arg("seed") = 0, "Writes a synthetic workspace with experiment.ini.");

  const auto with_config = [](const std::filesystem::path& path, const std::optional<std::filesystem::path>& out) {
    ExperimentConfig cfg = load_config(path);
    if (out) cfg.out_dir = *out;
    return cfg;
  };
  m.def("pretrain", [=](const std::filesystem::path& c, std::optional<std::filesystem::path> out) {
    return cmd_pretrain(with_config(c, out)).files;
  }, py::arg("config"), py::arg("out_dir") = py::none());
  m.def("meta", [=](const std::filesystem::path& c, std::optional<std::filesystem::path> out) {
    return cmd_meta(with_config(c, out)).files;
  }, py::arg("config"), py::arg("out_dir") = py::none());
  m.def("eval", [=](const std::filesystem::path& c, std::optional<std::filesystem::path> out, bool baseline) {
    return cmd_eval(with_config(c, out), baseline).files;
  }, py::arg("config"), py::arg("out_dir") = py::none(), py::arg("baseline") = false);
  m.def("sweep", [=](const std::filesystem::path& c, std::optional<std::filesystem::path> out, bool pairs) {
    return cmd_sweep(with_config(c, out), pairs).files;
  }, py::arg("config"), py::arg("out_dir") = py::none(), py::arg("pairs") = false);

  m.def("selftest", [] {
    py::list out;
    for (const auto& c : run_selftest()) out.append(py::make_tuple(c.name, c.passed, c.detail));
    return out;
  }, "[(name, passed, detail)] for the built-in oracle checks.");
}
