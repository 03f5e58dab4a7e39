#include "xmaml/meta.hpp"

#include <cmath>
#include <numeric>

#include "xmaml/errors.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {

std::string to_string(Order o) { return o == Order::full ? "full" : "first"; }
std::string to_string(OuterOptimizer o) { return o == OuterOptimizer::sgd ? "sgd" : "adam"; }

Order parse_order(const std::string& text) {
  if (text == "full") return Order::full;
  if (text == "first") return Order::first;
  throw ArgumentError("order must be full or first, got '" + text + "'");
}

OuterOptimizer parse_outer_optimizer(const std::string& text) {
  if (text == "sgd") return OuterOptimizer::sgd;
  if (text == "adam") return OuterOptimizer::adam;
  throw ArgumentError("outer optimizer must be sgd or adam, got '" + text + "'");
}

void MetaConfig::validate() const {
  if (!(alpha > 0.0)) throw ArgumentError("alpha must be > 0");
  if (!(beta >= 0.0)) throw ArgumentError("beta must be >= 0");
  if (k == 0 || q == 0) throw ArgumentError("K and Q must be >= 1");
  if (inner_steps == 0) throw ArgumentError("inner_steps must be >= 1");
  if (tasks_per_meta_batch == 0) throw ArgumentError("tasks_per_meta_batch must be >= 1");
}

void PretrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ArgumentError("train_fraction must be in (0, 1]");
  }
  if (!(lr >= 0.0)) throw ArgumentError("lr must be >= 0");
}

Model train_supervised(const Model& model, const Corpus& data, std::size_t epochs,
                       std::size_t batch_size, double lr, std::uint64_t seed) {
  if (epochs == 0) return model;
  if (data.empty()) throw EmptyCorpusError("no training records");
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  Rng rng(derive_seed(seed, "train_supervised"));
  Adam adam(lr);
  Model out = model;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const Batch batch = data.batch(std::span(order).subspan(start, end - start));
      const ParamVector g = grad(
          [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(out.spec, p, batch); },
          out.params);
      out.params = adam.step(out.params, g);
    }
  }
  return out;
}

Model pretrain(const Model& model, const Corpus& source, const PretrainConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw EmptyCorpusError("pretraining corpus is empty");
  if (cfg.epochs == 0) return model;
  const Corpus train = cfg.train_fraction < 1.0
                           ? subsample_fraction(source, cfg.train_fraction, cfg.seed)
                           : source;
  return train_supervised(model, train, cfg.epochs, cfg.batch_size, cfg.lr,
                          derive_seed(cfg.seed, "pretrain"));
}

std::vector<ad::Var> inner_adapt(ad::Tape& tape, std::span<const ad::Var> theta,
                                 const LossFn& loss, double alpha, std::size_t steps,
                                 bool create_graph) {
  if (steps == 0) throw ArgumentError("inner_adapt needs steps >= 1");
  if (!(alpha > 0.0)) throw ArgumentError("inner_adapt needs alpha > 0");
  std::vector<ad::Var> current(theta.begin(), theta.end());
  for (std::size_t s = 0; s < steps; ++s) {
    const ad::Var l = loss(tape, current);
    const auto g = tape.gradient(l, current, create_graph);
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (!g[i].value().all_finite()) {
        throw NonFiniteError("inner gradient of segment " + std::to_string(i) +
                             " is not finite");
      }
      current[i] = current[i] - ad::affine(g[i], alpha, 0.0);
    }
  }
  return current;
}

ParamVector inner_adapt(const ParamVector& theta, const LossFn& loss, double alpha,
                        std::size_t steps) {
  if (steps == 0) throw ArgumentError("inner_adapt needs steps >= 1");
  if (!(alpha > 0.0)) throw ArgumentError("inner_adapt needs alpha > 0");
  ParamVector current = theta;
  for (std::size_t s = 0; s < steps; ++s) {
    current -= alpha * grad(loss, current);
  }
  return current;
}

MetaGradient meta_gradient(const LossFn& support, const LossFn& query,
                           const ParamVector& theta, double alpha, std::size_t steps,
                           Order order) {
  MetaGradient out;
  if (order == Order::first) {
    const ParamVector adapted = inner_adapt(theta, support, alpha, steps);
    out.gradient = grad(query, adapted, out.query_loss);
    return out;
  }
  ad::Tape tape;
  const auto vars = attach(tape, theta);
  const auto adapted = inner_adapt(tape, vars, support, alpha, steps, /*create_graph=*/true);
  const ad::Var l = query(tape, adapted);
  out.query_loss = l.value().item();
  if (!std::isfinite(out.query_loss)) throw NonFiniteError("query loss is not finite");
  out.gradient = collect(theta, tape.gradient(l, vars));
  if (auto bad = out.gradient.first_non_finite(); !bad.empty()) {
    throw NonFiniteError("meta-gradient of segment '" + bad + "' is not finite");
  }
  return out;
}

MetaGradient meta_gradient(const ModelSpec& spec, const ParamVector& theta,
                           const Episode& episode, const MetaConfig& cfg) {
  const LossFn support = [&](ad::Tape&, std::span<const ad::Var> p) {
    return task_loss(spec, p, episode.support);
  };
  const LossFn query = [&](ad::Tape&, std::span<const ad::Var> p) {
    return task_loss(spec, p, episode.query);
  };
  return meta_gradient(support, query, theta, cfg.alpha, cfg.inner_steps, cfg.order);
}

MetaState meta_update(MetaState state, std::span<const Episode> episodes,
                      const ModelSpec& spec, const MetaConfig& cfg) {
  if (episodes.empty()) throw ArgumentError("meta_update needs at least one episode");
  ParamVector total = state.theta.zeros_like();
  double loss = 0.0;
  for (const Episode& ep : episodes) {
    const MetaGradient mg = meta_gradient(spec, state.theta, ep, cfg);
    total += mg.gradient;
    loss += mg.query_loss;
  }
  if (cfg.outer_optimizer == OuterOptimizer::sgd) {
    state.theta -= cfg.beta * total;
  } else {
    if (!state.outer) state.outer.emplace(cfg.beta, cfg.adam);
    state.theta = state.outer->step(state.theta, total);
  }
  ++state.iteration;
  state.loss_history.emplace_back(state.iteration, loss);
  return state;
}

Model xmaml_meta_learn(const Model& model, const Corpus& dev, const LanguagePlan& plan,
                       const MetaConfig& cfg, MetaState* trace) {
  cfg.validate();
  plan.validate(/*require_auxiliary=*/true);
  for (const auto& aux : plan.auxiliary) {
    const std::size_t have = dev.indices(aux).size();
    if (have < cfg.k + cfg.q) throw InsufficientDataError(aux, cfg.k + cfg.q, have);
  }
  MetaState state{model.params, 0, {}, std::nullopt};
  Rng rng(derive_seed(cfg.seed, "xmaml_meta_learn"));
  std::vector<Episode> episodes;
  for (std::size_t it = 0; it < cfg.meta_iterations; ++it) {
    episodes.clear();
    for (const auto& aux : plan.auxiliary) {
      for (std::size_t t = 0; t < cfg.tasks_per_meta_batch; ++t) {
        episodes.push_back(sample_episode(dev, aux, cfg.k, cfg.q, rng));
      }
    }
    state = meta_update(std::move(state), episodes, model.spec, cfg);
  }
  Model out{model.spec, state.theta};
  if (trace) *trace = std::move(state);
  return out;
}

}  // namespace xmaml
