#include "xmaml/model.hpp"

#include <cmath>

#include "xmaml/calculus.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/losses.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::string to_string(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "regression";
}

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::tanh;
  if (text == "relu") return Activation::relu;
  throw ArgumentError("unknown activation '" + text + "'");
}

TaskKind parse_task_kind(const std::string& text) {
  if (text == "classification") return TaskKind::classification;
  if (text == "regression") return TaskKind::regression;
  throw ArgumentError("unknown task kind '" + text + "'");
}

void ModelSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ArgumentError("model dims must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ArgumentError("hidden dims must be >= 1");
  }
  if (task_kind == TaskKind::classification && output_dim < 2) {
    throw ArgumentError("classifiers need output_dim >= 2");
  }
}

std::vector<std::size_t> ModelSpec::layer_dims() const {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(output_dim);
  return dims;
}

std::size_t ModelSpec::total_dim() const {
  const auto dims = layer_dims();
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) total += dims[i] * dims[i + 1] + dims[i + 1];
  return total;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "init_model"));
  const auto dims = spec.layer_dims();
  std::vector<Segment> segments;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double s = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
    std::vector<double> w(dims[i] * dims[i + 1]);
    for (double& v : w) v = rng.uniform(-s, s);
    segments.push_back({"layer" + std::to_string(i) + ".weight",
                        Tensor({dims[i], dims[i + 1]}, std::move(w))});
    segments.push_back({"layer" + std::to_string(i) + ".bias", Tensor::zeros({dims[i + 1]})});
  }
  return Model{spec, ParamVector(std::move(segments))};
}

ad::Var forward(const ModelSpec& spec, std::span<const ad::Var> params, ad::Var inputs) {
  const auto dims = spec.layer_dims();
  const std::size_t layers = dims.size() - 1;
  if (params.size() != 2 * layers) {
    throw StructureError("forward: expected " + std::to_string(2 * layers) +
                         " parameter segments, got " + std::to_string(params.size()));
  }
  if (inputs.value().rank() != 2 || inputs.shape()[1] != spec.input_dim) {
    throw StructureError("forward: input shape " + shape_string(inputs.shape()) +
                         " does not match input_dim " + std::to_string(spec.input_dim));
  }
  ad::Var h = inputs;
  for (std::size_t i = 0; i < layers; ++i) {
    h = ad::add_bias(ad::matmul(h, params[2 * i]), params[2 * i + 1]);
    if (i + 1 < layers) {
      h = spec.activation == Activation::tanh ? ad::tanh(h) : ad::relu(h);
    }
  }
  return h;
}

Tensor forward(const Model& model, const Tensor& inputs) {
  ad::Tape tape;
  const auto vars = attach(tape, model.params, /*as_constants=*/true);
  return forward(model.spec, vars, tape.constant(inputs)).value();
}

std::vector<int> class_labels(const Batch& batch, std::size_t classes) {
  std::vector<int> labels(batch.targets.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double t = batch.targets[i];
    if (t != std::floor(t) || t < 0.0 || t >= static_cast<double>(classes)) {
      throw LabelError("target " + std::to_string(t) + " at row " + std::to_string(i) +
                       " is not a class in [0, " + std::to_string(classes) + ")");
    }
    labels[i] = static_cast<int>(t);
  }
  return labels;
}

ad::Var task_loss(const ModelSpec& spec, std::span<const ad::Var> params, const Batch& batch) {
  if (batch.size() == 0) throw EmptyInputError("task_loss: empty batch");
  ad::Tape& tape = params.front().tape();
  const ad::Var out = forward(spec, params, tape.constant(batch.inputs));
  if (spec.task_kind == TaskKind::classification) {
    return cross_entropy(out, class_labels(batch, spec.output_dim));
  }
  if (spec.output_dim != 1) {
    throw StructureError("regression loss expects output_dim 1");
  }
  return mse(out, Tensor({batch.size(), 1}, batch.targets));
}

double task_loss(const Model& model, const Batch& batch) {
  ad::Tape tape;
  const auto vars = attach(tape, model.params, /*as_constants=*/true);
  return task_loss(model.spec, vars, batch).value().item();
}

}  // namespace xmaml
