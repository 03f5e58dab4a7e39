#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmaml/autodiff.hpp"
#include "xmaml/params.hpp"
#include "xmaml/tensor.hpp"

namespace xmaml {

enum class Activation { tanh, relu };
enum class TaskKind { classification, regression };

std::string to_string(Activation a);
std::string to_string(TaskKind k);
Activation parse_activation(const std::string& text);
TaskKind parse_task_kind(const std::string& text);

/// Feed-forward network shape. Layer i maps d_i -> d_{i+1} with weight
/// [d_i, d_{i+1}] and bias [d_{i+1}]; hidden layers use `activation`, the
/// last layer is affine.
struct ModelSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 2;
  Activation activation = Activation::tanh;
  TaskKind task_kind = TaskKind::classification;

  /// Throws ArgumentError for zero dims or a classifier with < 2 outputs.
  void validate() const;
  std::vector<std::size_t> layer_dims() const;
  std::size_t total_dim() const;
};

struct Model {
  ModelSpec spec;
  ParamVector params;
};

/// Labeled rows. `targets` holds class ids (as doubles) for classification
/// and real values for regression.
struct Batch {
  Tensor inputs;  // [n, input_dim]
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
};

/// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out));
/// zero biases. Deterministic in (spec, seed).
Model init_model(const ModelSpec& spec, std::uint64_t seed);

/// Records the network on `params`' tape. Output is [n, output_dim].
ad::Var forward(const ModelSpec& spec, std::span<const ad::Var> params, ad::Var inputs);
Tensor forward(const Model& model, const Tensor& inputs);

/// Cross-entropy for classifiers, mean squared error for regressors.
ad::Var task_loss(const ModelSpec& spec, std::span<const ad::Var> params, const Batch& batch);
double task_loss(const Model& model, const Batch& batch);

/// Labels of a classification batch as ints; throws LabelError when a
/// target is not an integer in [0, classes).
std::vector<int> class_labels(const Batch& batch, std::size_t classes);

}  // namespace xmaml
