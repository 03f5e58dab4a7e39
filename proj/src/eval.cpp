#include "xmaml/eval.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "xmaml/csv.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/losses.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {

std::string to_string(Metric m) {
  switch (m) {
    case Metric::accuracy:
      return "accuracy";
    case Metric::macro_f1:
      return "macro_f1";
    case Metric::mse:
      return "mse";
  }
  return "?";
}

std::string to_string(Mode m) { return m == Mode::zero ? "zero" : "few"; }

Metric parse_metric(const std::string& text) {
  if (text == "accuracy") return Metric::accuracy;
  if (text == "macro_f1") return Metric::macro_f1;
  if (text == "mse") return Metric::mse;
  throw ArgumentError("unknown metric '" + text + "'");
}

Mode parse_mode(const std::string& text) {
  if (text == "zero") return Mode::zero;
  if (text == "few") return Mode::few;
  throw ArgumentError("mode must be zero or few, got '" + text + "'");
}

EvalResult EvalResult::from_runs(std::string group, Metric metric, std::vector<double> per_run) {
  if (per_run.empty()) throw EmptyInputError("EvalResult needs at least one run");
  double sum = 0.0;
  for (double v : per_run) sum += v;
  EvalResult r;
  r.group = std::move(group);
  r.metric = metric;
  r.value = sum / static_cast<double>(per_run.size());
  r.num_runs = per_run.size();
  r.per_run_values = std::move(per_run);
  return r;
}

std::vector<int> predict_classes(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw EmptyInputError("accuracy of empty input");
  if (predictions.size() != labels.size()) throw StructureError("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double macro_f1(std::span<const int> predictions, std::span<const int> labels,
                std::size_t num_classes) {
  if (predictions.empty() || labels.empty()) throw EmptyInputError("macro_f1 of empty input");
  if (predictions.size() != labels.size()) throw StructureError("macro_f1: length mismatch");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto p = static_cast<std::size_t>(predictions[i]);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (p >= num_classes || y >= num_classes) throw LabelError("macro_f1: class out of range");
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    ++counted;
  }
  return sum / static_cast<double>(counted);
}

double score(const Model& model, const Batch& batch, Metric metric) {
  if (batch.size() == 0) throw EmptyInputError("score of an empty batch");
  const Tensor out = forward(model, batch.inputs);
  if (metric == Metric::mse) {
    return mse(out, Tensor(out.shape(), batch.targets));
  }
  if (model.spec.task_kind != TaskKind::classification) {
    throw ArgumentError(to_string(metric) + " needs a classification model");
  }
  const auto labels = class_labels(batch, model.spec.output_dim);
  const auto preds = predict_classes(out);
  return metric == Metric::accuracy ? accuracy(preds, labels)
                                    : macro_f1(preds, labels, model.spec.output_dim);
}

EvalResult evaluate(const Model& model, const Corpus& corpus, const std::string& group,
                    Metric metric) {
  if (!corpus.has_group(group) || corpus.indices(group).empty()) {
    throw EmptyGroupError("no records for group '" + group + "'");
  }
  return EvalResult::from_runs(group, metric, {score(model, corpus.group_batch(group), metric)});
}

EvalResult few_shot_eval(const Model& model, const Corpus& dev, const Corpus& test,
                         const std::string& group, const FineTuneConfig& cfg, Metric metric) {
  if (cfg.epochs == 0) return evaluate(model, test, group, metric);
  if (!dev.has_group(group)) throw EmptyGroupError("no dev records for group '" + group + "'");
  const Model tuned = train_supervised(model, dev.restrict_to(group), cfg.epochs,
                                       cfg.batch_size, cfg.lr, cfg.seed);
  return evaluate(tuned, test, group, metric);
}

Model pretrain_for_sweep(const ExperimentData& data, const SweepConfig& cfg) {
  const Model init = init_model(cfg.model, derive_seed(cfg.seed, "init"));
  PretrainConfig pc = cfg.pretrain;
  pc.seed = derive_seed(cfg.seed, "pretrain");
  return pretrain(init, data.train.restrict_to(cfg.plan.source), pc);
}

std::uint64_t meta_run_seed(const SweepConfig& cfg, std::span<const std::string> aux,
                            std::size_t run) {
  std::vector<std::string> sorted(aux.begin(), aux.end());
  std::sort(sorted.begin(), sorted.end());
  return derive_seed(cfg.seed, "meta", {fnv1a(csv::join(sorted)), run});
}

std::uint64_t finetune_run_seed(const SweepConfig& cfg, const std::string& target,
                                std::size_t run) {
  return derive_seed(cfg.seed, "finetune", {fnv1a(target), run});
}

double run_score(const Model& model, const ExperimentData& data, const std::string& target,
                 const SweepConfig& cfg, std::size_t run) {
  if (cfg.mode == Mode::zero) return evaluate(model, data.test, target, cfg.metric).value;
  FineTuneConfig ft = cfg.finetune;
  ft.seed = finetune_run_seed(cfg, target, run);
  return few_shot_eval(model, data.dev, data.test, target, ft, cfg.metric).value;
}

EvalResult baseline_result(const Model& pretrained, const ExperimentData& data,
                           const std::string& target, const SweepConfig& cfg) {
  const std::size_t runs = std::max<std::size_t>(1, cfg.meta.num_runs);
  std::vector<double> values;
  for (std::size_t r = 0; r < runs; ++r) values.push_back(run_score(pretrained, data, target, cfg, r));
  return EvalResult::from_runs(target, cfg.metric, std::move(values));
}

std::vector<EvalResult> auxiliary_results(const Model& pretrained, const ExperimentData& data,
                                          std::span<const std::string> aux,
                                          std::span<const std::string> targets,
                                          const SweepConfig& cfg) {
  const std::size_t runs = std::max<std::size_t>(1, cfg.meta.num_runs);
  LanguagePlan plan = cfg.plan;
  plan.auxiliary.assign(aux.begin(), aux.end());
  plan = plan.canonical();
  std::vector<std::vector<double>> values(targets.size());
  for (std::size_t r = 0; r < runs; ++r) {
    MetaConfig mc = cfg.meta;
    mc.seed = meta_run_seed(cfg, plan.auxiliary, r);
    const Model learned = xmaml_meta_learn(pretrained, data.dev, plan, mc);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      values[t].push_back(run_score(learned, data, targets[t], cfg, r));
    }
  }
  std::vector<EvalResult> out;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    out.push_back(EvalResult::from_runs(targets[t], cfg.metric, std::move(values[t])));
  }
  return out;
}

std::optional<double> DeltaMatrix::delta(const std::string& target, const std::string& aux) const {
  const auto t = std::find(targets.begin(), targets.end(), target);
  const auto a = std::find(auxiliaries.begin(), auxiliaries.end(), aux);
  if (t == targets.end()) throw UnknownGroupError(target);
  if (a == auxiliaries.end()) throw UnknownGroupError(aux);
  return deltas[static_cast<std::size_t>(t - targets.begin())]
               [static_cast<std::size_t>(a - auxiliaries.begin())];
}

const EvalResult& DeltaMatrix::baseline_for(const std::string& target) const {
  const auto t = std::find(targets.begin(), targets.end(), target);
  if (t == targets.end()) throw UnknownGroupError(target);
  return baseline[static_cast<std::size_t>(t - targets.begin())];
}

DeltaMatrix sweep_single_aux(const ExperimentData& data, const SweepConfig& cfg) {
  if (cfg.plan.pool.size() < 2) throw ArgumentError("single-auxiliary sweep needs >= 2 pool groups");
  cfg.plan.validate(/*require_auxiliary=*/false);
  const Model pretrained = pretrain_for_sweep(data, cfg);

  DeltaMatrix m;
  m.targets = cfg.plan.pool;
  m.auxiliaries = cfg.plan.pool;
  for (const auto& t : m.targets) m.baseline.push_back(baseline_result(pretrained, data, t, cfg));
  m.deltas.assign(m.targets.size(), std::vector<std::optional<double>>(m.auxiliaries.size()));

  for (std::size_t a = 0; a < m.auxiliaries.size(); ++a) {
    const std::string aux[] = {m.auxiliaries[a]};
    std::vector<std::string> targets;
    for (const auto& t : m.targets) {
      if (t != aux[0]) targets.push_back(t);
    }
    const auto results = auxiliary_results(pretrained, data, aux, targets, cfg);
    for (const EvalResult& r : results) {
      const auto row = static_cast<std::size_t>(
          std::find(m.targets.begin(), m.targets.end(), r.group) - m.targets.begin());
      m.deltas[row][a] = r.value - m.baseline[row].value;
    }
  }
  return m;
}

RowAggregate aggregate_scores(const std::string& target,
                              std::span<const std::pair<std::string, double>> cells) {
  if (cells.empty()) throw EmptyRowError("row '" + target + "' has no defined cells");
  RowAggregate out;
  out.target = target;
  double sum = 0.0;
  bool first = true;
  for (const auto& [aux, value] : cells) {
    sum += value;
    if (first || value > out.max || (value == out.max && aux < out.argmax_aux)) {
      out.max = value;
      out.argmax_aux = aux;
      first = false;
    }
  }
  out.avg = sum / static_cast<double>(cells.size());
  return out;
}

std::vector<RowAggregate> aggregate_avg_max(const DeltaMatrix& matrix) {
  std::vector<RowAggregate> out;
  for (std::size_t t = 0; t < matrix.targets.size(); ++t) {
    std::vector<std::pair<std::string, double>> cells;
    for (std::size_t a = 0; a < matrix.auxiliaries.size(); ++a) {
      if (const auto& d = matrix.deltas[t][a]) {
        cells.emplace_back(matrix.auxiliaries[a], matrix.baseline[t].value + *d);
      }
    }
    out.push_back(aggregate_scores(matrix.targets[t], cells));
  }
  return out;
}

PairSweep sweep_pair_aux(const ExperimentData& data, const SweepConfig& cfg) {
  if (cfg.plan.pool.size() < 3) throw ArgumentError("pair sweep needs >= 3 pool groups");
  cfg.plan.validate(/*require_auxiliary=*/false);
  const Model pretrained = pretrain_for_sweep(data, cfg);
  std::vector<std::string> pool = cfg.plan.pool;
  std::sort(pool.begin(), pool.end());

  PairSweep out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const std::string aux[] = {pool[i], pool[j]};
      std::vector<std::string> targets;
      for (const auto& t : cfg.plan.pool) {
        if (t != pool[i] && t != pool[j]) targets.push_back(t);
      }
      for (auto& r : auxiliary_results(pretrained, data, aux, targets, cfg)) {
        out.scores.push_back({r.group, pool[i], pool[j], std::move(r)});
      }
    }
  }
  for (const auto& t : cfg.plan.pool) {
    const PairScore* best = nullptr;
    for (const PairScore& s : out.scores) {
      if (s.target != t) continue;
      // Candidates arrive in (first, second) order, so strict > keeps the
      // smallest pair on ties.
      if (!best || s.result.value > best->result.value) best = &s;
    }
    if (best) out.best.push_back(*best);
  }
  return out;
}

void write_delta_matrix(const DeltaMatrix& matrix, const std::filesystem::path& matrix_csv,
                        const std::filesystem::path& baseline_csv) {
  std::ostringstream m;
  m << "target";
  for (const auto& a : matrix.auxiliaries) m << ',' << a;
  m << '\n';
  for (std::size_t t = 0; t < matrix.targets.size(); ++t) {
    m << matrix.targets[t];
    for (const auto& d : matrix.deltas[t]) {
      m << ',';
      if (d) m << csv::format_double(*d);
    }
    m << '\n';
  }
  csv::write_file(matrix_csv, m.str());

  std::size_t runs = 0;
  for (const auto& b : matrix.baseline) runs = std::max(runs, b.per_run_values.size());
  std::ostringstream b;
  b << "target,metric,baseline";
  for (std::size_t r = 0; r < runs; ++r) b << ",run" << r;
  b << '\n';
  for (const auto& res : matrix.baseline) {
    b << res.group << ',' << to_string(res.metric) << ',' << csv::format_double(res.value);
    for (std::size_t r = 0; r < runs; ++r) {
      b << ',';
      if (r < res.per_run_values.size()) b << csv::format_double(res.per_run_values[r]);
    }
    b << '\n';
  }
  csv::write_file(baseline_csv, b.str());
}

DeltaMatrix read_delta_matrix(const std::filesystem::path& matrix_csv) {
  const auto lines = csv::read_lines(matrix_csv);
  if (lines.empty()) throw FormatError("empty delta matrix", 1);
  const auto header = csv::split(lines[0]);
  if (header.empty() || header[0] != "target") throw FormatError("first column must be target", 1);
  DeltaMatrix m;
  m.auxiliaries.assign(header.begin() + 1, header.end());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = csv::split(lines[i]);
    if (fields.size() != header.size()) {
      throw FormatError("expected " + std::to_string(header.size()) + " fields", i + 1);
    }
    m.targets.push_back(fields[0]);
    std::vector<std::optional<double>> row;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      if (fields[j].empty()) {
        row.emplace_back();
        continue;
      }
      double v = 0.0;
      if (!csv::parse_double(fields[j], v)) throw FormatError("bad delta '" + fields[j] + "'", i + 1);
      row.emplace_back(v);
    }
    m.deltas.push_back(std::move(row));
  }
  return m;
}

DeltaMatrix read_delta_matrix(const std::filesystem::path& matrix_csv,
                              const std::filesystem::path& baseline_csv) {
  DeltaMatrix m = read_delta_matrix(matrix_csv);
  const auto blines = csv::read_lines(baseline_csv);
  if (blines.empty()) throw FormatError("empty baseline file", 1);
  std::map<std::string, EvalResult> baselines;
  for (std::size_t i = 1; i < blines.size(); ++i) {
    if (blines[i].empty()) continue;
    const auto fields = csv::split(blines[i]);
    if (fields.size() < 3) throw FormatError("baseline row needs target,metric,baseline", i + 1);
    EvalResult r;
    r.group = fields[0];
    r.metric = parse_metric(fields[1]);
    if (!csv::parse_double(fields[2], r.value)) throw FormatError("bad baseline value", i + 1);
    for (std::size_t j = 3; j < fields.size(); ++j) {
      if (fields[j].empty()) continue;
      double v = 0.0;
      if (!csv::parse_double(fields[j], v)) throw FormatError("bad run value", i + 1);
      r.per_run_values.push_back(v);
    }
    r.num_runs = r.per_run_values.size();
    baselines[r.group] = std::move(r);
  }
  for (const auto& t : m.targets) {
    const auto it = baselines.find(t);
    if (it == baselines.end()) throw UnknownGroupError(t);
    m.baseline.push_back(it->second);
  }
  return m;
}

void write_aggregates(const std::vector<RowAggregate>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "target,avg,max,argmax_aux\n";
  for (const auto& r : rows) {
    out << r.target << ',' << csv::format_double(r.avg) << ',' << csv::format_double(r.max) << ','
        << r.argmax_aux << '\n';
  }
  csv::write_file(path, out.str());
}

void write_best_pairs(const PairSweep& sweep, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "target,aux1,aux2,score\n";
  for (const auto& p : sweep.best) {
    out << p.target << ',' << p.first << ',' << p.second << ','
        << csv::format_double(p.result.value) << '\n';
  }
  csv::write_file(path, out.str());
}

}  // namespace xmaml
