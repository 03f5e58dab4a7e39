#pragma once

// Zero-/few-shot evaluation and the reporting apparatus built on it:
// multi-run averaging, target x auxiliary delta matrices, AVG/MAX row
// aggregation and the best auxiliary-pair search.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmaml/episodes.hpp"
#include "xmaml/meta.hpp"
#include "xmaml/model.hpp"

namespace xmaml {

enum class Metric { accuracy, macro_f1, mse };
enum class Mode { zero, few };

std::string to_string(Metric m);
std::string to_string(Mode m);
Metric parse_metric(const std::string& text);
Mode parse_mode(const std::string& text);

struct EvalResult {
  std::string group;
  Metric metric = Metric::accuracy;
  double value = 0.0;
  std::size_t num_runs = 0;
  std::vector<double> per_run_values;

  /// value = mean(per_run), summed in run order.
  static EvalResult from_runs(std::string group, Metric metric, std::vector<double> per_run);
};

/// Argmax of each logit row; ties go to the lowest class index.
std::vector<int> predict_classes(const Tensor& logits);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Unweighted mean of per-class F1 over classes that occur in the labels or
/// the predictions; classes absent from both are skipped. Throws
/// EmptyInputError on empty input.
double macro_f1(std::span<const int> predictions, std::span<const int> labels,
                std::size_t num_classes);

double score(const Model& model, const Batch& batch, Metric metric);

/// Metric over every record of `group`. Throws EmptyGroupError.
EvalResult evaluate(const Model& model, const Corpus& corpus, const std::string& group,
                    Metric metric);

struct FineTuneConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Fine-tunes a copy of `model` on the dev records of `group` and scores it
/// on the test records. epochs == 0 is exactly evaluate() on `test`.
EvalResult few_shot_eval(const Model& model, const Corpus& dev, const Corpus& test,
                         const std::string& group, const FineTuneConfig& cfg, Metric metric);

/// Train (source), dev (meta-learning and fine-tuning) and test corpora.
struct ExperimentData {
  Corpus train;
  Corpus dev;
  Corpus test;
};

struct SweepConfig {
  ModelSpec model;
  PretrainConfig pretrain;
  MetaConfig meta;
  FineTuneConfig finetune;
  /// Source and pool; auxiliaries are chosen by the sweep.
  LanguagePlan plan;
  Mode mode = Mode::zero;
  Metric metric = Metric::accuracy;
  std::uint64_t seed = 0;
};

/// Model init plus source pretraining, shared by every cell of a sweep.
Model pretrain_for_sweep(const ExperimentData& data, const SweepConfig& cfg);

/// Seed of the meta-learning run `run` for auxiliary set `aux`.
std::uint64_t meta_run_seed(const SweepConfig& cfg, std::span<const std::string> aux,
                            std::size_t run);
/// Seed of the fine-tuning run `run` on `target`; shared by baseline and
/// every auxiliary so comparisons are paired.
std::uint64_t finetune_run_seed(const SweepConfig& cfg, const std::string& target,
                                std::size_t run);

/// Scores `model` on `target` for run `run` under cfg.mode.
double run_score(const Model& model, const ExperimentData& data, const std::string& target,
                 const SweepConfig& cfg, std::size_t run);

/// Baseline (no meta-learning) result for `target` over cfg.meta.num_runs.
EvalResult baseline_result(const Model& pretrained, const ExperimentData& data,
                           const std::string& target, const SweepConfig& cfg);

/// Meta-learns with auxiliary set `aux` once per run and scores every
/// target not in `aux`. Result order follows `targets`.
std::vector<EvalResult> auxiliary_results(const Model& pretrained, const ExperimentData& data,
                                          std::span<const std::string> aux,
                                          std::span<const std::string> targets,
                                          const SweepConfig& cfg);

/// Rows are targets, columns auxiliaries; a cell is absent when the target
/// is the auxiliary.
struct DeltaMatrix {
  std::vector<std::string> targets;
  std::vector<std::string> auxiliaries;
  std::vector<std::vector<std::optional<double>>> deltas;
  std::vector<EvalResult> baseline;

  std::optional<double> delta(const std::string& target, const std::string& aux) const;
  const EvalResult& baseline_for(const std::string& target) const;
};

DeltaMatrix sweep_single_aux(const ExperimentData& data, const SweepConfig& cfg);

struct RowAggregate {
  std::string target;
  double avg = 0.0;
  double max = 0.0;
  std::string argmax_aux;
};

/// Mean and max of absolute (baseline + delta) scores per row; argmax ties
/// go to the lexicographically smallest auxiliary. Throws EmptyRowError.
std::vector<RowAggregate> aggregate_avg_max(const DeltaMatrix& matrix);

/// Same reduction over explicit (auxiliary, absolute score) cells.
RowAggregate aggregate_scores(const std::string& target,
                              std::span<const std::pair<std::string, double>> cells);

struct PairScore {
  std::string target;
  std::string first;
  std::string second;
  EvalResult result;
};

struct PairSweep {
  /// One entry per (target, unordered pair not containing the target).
  std::vector<PairScore> scores;
  /// Highest-scoring pair per target; ties go to the smallest (first, second).
  std::vector<PairScore> best;
};

PairSweep sweep_pair_aux(const ExperimentData& data, const SweepConfig& cfg);

void write_delta_matrix(const DeltaMatrix& matrix, const std::filesystem::path& matrix_csv,
                        const std::filesystem::path& baseline_csv);
DeltaMatrix read_delta_matrix(const std::filesystem::path& matrix_csv,
                              const std::filesystem::path& baseline_csv);
/// Deltas only; `baseline` stays empty.
DeltaMatrix read_delta_matrix(const std::filesystem::path& matrix_csv);
void write_aggregates(const std::vector<RowAggregate>& rows, const std::filesystem::path& path);
void write_best_pairs(const PairSweep& sweep, const std::filesystem::path& path);

}  // namespace xmaml
