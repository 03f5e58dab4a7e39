#pragma once

// MAML machinery and the cross-lingual pipeline built on it:
//
//   inner step      theta' = theta - alpha * grad L_support(theta)
//   meta-objective  sum_i L_query_i(theta'_i)
//   meta-update     theta <- theta - beta * grad_theta sum_i L_query_i(theta'_i)
//
// With Order::full the gradient flows through the inner step (the Hessian
// term is exact, via double backprop). Order::first drops it.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmaml/calculus.hpp"
#include "xmaml/episodes.hpp"
#include "xmaml/model.hpp"
#include "xmaml/optim.hpp"

namespace xmaml {

enum class Order { full, first };
enum class OuterOptimizer { sgd, adam };

std::string to_string(Order o);
std::string to_string(OuterOptimizer o);
Order parse_order(const std::string& text);
OuterOptimizer parse_outer_optimizer(const std::string& text);

struct MetaConfig {
  double alpha = 1e-4;
  double beta = 1e-5;
  std::size_t inner_steps = 1;
  std::size_t meta_iterations = 100;
  /// Episodes drawn from each auxiliary group per meta-iteration.
  std::size_t tasks_per_meta_batch = 4;
  std::size_t k = 16;
  std::size_t q = 16;
  Order order = Order::full;
  OuterOptimizer outer_optimizer = OuterOptimizer::adam;
  AdamParams adam;
  std::uint64_t seed = 0;
  std::size_t num_runs = 10;

  /// alpha > 0, beta >= 0, K, Q, inner_steps >= 1.
  void validate() const;
};

struct PretrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double train_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetaState {
  ParamVector theta;
  std::size_t iteration = 0;
  /// (iteration, summed query loss) after each meta-update.
  std::vector<std::pair<std::size_t, double>> loss_history;
  std::optional<Adam> outer;
};

/// Mini-batch Adam on task_loss over shuffled `data`. Deterministic in seed;
/// epochs == 0 returns the model untouched.
Model train_supervised(const Model& model, const Corpus& data, std::size_t epochs,
                       std::size_t batch_size, double lr, std::uint64_t seed);

/// Source-language pretraining on `cfg.train_fraction` of `source`.
/// Throws EmptyCorpusError when nothing is left to train on.
Model pretrain(const Model& model, const Corpus& source, const PretrainConfig& cfg);

/// Plain gradient descent with fixed step `alpha`.
ParamVector inner_adapt(const ParamVector& theta, const LossFn& loss, double alpha,
                        std::size_t steps);

/// Tape form of inner_adapt. With create_graph the adapted parameters stay
/// differentiable functions of `theta`.
std::vector<ad::Var> inner_adapt(ad::Tape& tape, std::span<const ad::Var> theta,
                                 const LossFn& loss, double alpha, std::size_t steps,
                                 bool create_graph);

struct MetaGradient {
  ParamVector gradient;
  double query_loss = 0.0;
};

/// Gradient w.r.t. theta of query(inner_adapt(theta, support)).
MetaGradient meta_gradient(const LossFn& support, const LossFn& query,
                           const ParamVector& theta, double alpha, std::size_t steps,
                           Order order);
MetaGradient meta_gradient(const ModelSpec& spec, const ParamVector& theta,
                           const Episode& episode, const MetaConfig& cfg);

/// Sums the episodes' meta-gradients in order and applies one outer step.
MetaState meta_update(MetaState state, std::span<const Episode> episodes,
                      const ModelSpec& spec, const MetaConfig& cfg);

/// Meta-learns on the auxiliary groups of `plan` using `dev`. Each
/// iteration visits the auxiliaries in order, draws tasks_per_meta_batch
/// episodes from each, and applies one meta-update. `trace`, when given,
/// receives the final state.
Model xmaml_meta_learn(const Model& model, const Corpus& dev, const LanguagePlan& plan,
                       const MetaConfig& cfg, MetaState* trace = nullptr);

}  // namespace xmaml
