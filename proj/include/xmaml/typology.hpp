#pragma once

// Typological correlation analysis: predict categorical language features
// (condition "value") or feature-value agreement between a target and an
// auxiliary (condition "match") from X-MAML deltas, and compare against
// frequency baselines with paired t-tests over resampled splits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmaml/eval.hpp"
#include "xmaml/stats.hpp"

namespace xmaml {

class TypologyTable {
 public:
  const std::vector<std::string>& languages() const { return languages_; }
  const std::vector<std::string>& features() const { return features_; }

  /// Absent cells return nullopt.
  std::optional<std::string> value(const std::string& language, const std::string& feature) const;
  /// Throws DuplicateCellError if the cell is already set; `line` is the
  /// source line reported in that error (0 when not from a file).
  void set(const std::string& language, const std::string& feature, std::string value,
           std::size_t line = 0);
  /// Sorted distinct values of `feature`.
  std::vector<std::string> domain(const std::string& feature) const;
  std::size_t cell_count() const { return cells_.size(); }

 private:
  struct Cell {
    std::string value;
    std::size_t line = 0;
  };
  std::vector<std::string> languages_;
  std::vector<std::string> features_;
  std::map<std::pair<std::string, std::string>, Cell> cells_;
};

/// CSV with header `language,feature,value`.
TypologyTable load_typology(const std::filesystem::path& path);
void save_typology(const TypologyTable& table, const std::filesystem::path& path);

struct LogisticModel {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  /// num_classes rows of input_dim weights followed by the bias.
  std::vector<std::vector<double>> weights;

  std::vector<double> logits(std::span<const double> x) const;
  /// Argmax class; ties go to the lowest index.
  int predict(std::span<const double> x) const;
};

struct LogisticOptions {
  double lr = 0.1;
  std::size_t epochs = 100;
  double l2 = 1e-4;
};

/// Full-batch gradient descent on mean multinomial cross-entropy plus
/// (l2/2)|W|^2 (bias excluded), from zero weights. The class count is
/// max(label) + 1. If `loss_trace` is given it receives the objective
/// before every epoch and after the last one.
LogisticModel fit_logistic(const std::vector<std::vector<double>>& features,
                           std::span<const int> labels, const LogisticOptions& opts = {},
                           std::vector<double>* loss_trace = nullptr);

double logistic_objective(const LogisticModel& model,
                          const std::vector<std::vector<double>>& features,
                          std::span<const int> labels, double l2);

/// Accuracy of always predicting the modal training label (ties go to the
/// lexicographically smallest value).
double baseline_most_frequent(std::span<const std::string> train, std::span<const std::string> test);

/// Accuracy of predictions drawn from the empirical training distribution,
/// averaged over `trials`.
double baseline_distributional(std::span<const std::string> train,
                               std::span<const std::string> test, std::uint64_t seed,
                               std::size_t trials);

struct ConditionOptions {
  LogisticOptions logistic;
  std::size_t distributional_trials = 100;
  /// Share of the instances held out for scoring in each resampled split
  /// (rounded, at least 1, leaving at least 3 to train on). 0 selects
  /// deterministic leave-one-out cross-validation over all instances.
  double holdout_fraction = 0.25;
};

struct ConditionOutcome {
  double model_accuracy = 0.0;
  double most_frequent_accuracy = 0.0;
  double distributional_accuracy = 0.0;
  std::size_t instances = 0;
  /// Held-out / training instance count of the split (1/(n-1) under
  /// leave-one-out).
  double test_train_ratio = 0.0;

  double best_baseline() const;
};

/// Condition (value): one instance per language with a value for `feature`
/// that appears in the matrix. Input is the language's delta row (as
/// target) followed by its column (as auxiliary), absent cells as 0.
/// Throws InsufficientLanguagesError below 4 instances.
ConditionOutcome condition_value_prediction(const TypologyTable& table, const DeltaMatrix& matrix,
                                            const std::string& feature, std::uint64_t split_seed,
                                            const ConditionOptions& opts = {});

/// Condition (match): one instance per ordered (target, auxiliary) pair with
/// a delta and both feature values; input is the scalar delta, label is
/// same/different. Throws InsufficientLanguagesError below 4 instances.
ConditionOutcome condition_match_prediction(const TypologyTable& table, const DeltaMatrix& matrix,
                                            const std::string& feature, std::uint64_t split_seed,
                                            const ConditionOptions& opts = {});

enum class Condition { value, match };
std::string to_string(Condition c);
Condition parse_condition(const std::string& text);

struct TestResult {
  std::string feature_id;
  double t_statistic = 0.0;
  std::size_t degrees_of_freedom = 0;
  double p_value = 1.0;
  std::size_t num_tests = 0;
  double corrected_cutoff = 0.0;
  bool significant = false;
  bool zero_variance = false;
  double model_acc_mean = 0.0;
  double baseline_acc_mean = 0.0;
};

struct ScanOptions {
  std::size_t splits = 20;
  double base_cutoff = 0.05;
  ConditionOptions condition;
};

struct ScanReport {
  /// Ascending p; ties keep table feature order.
  std::vector<TestResult> results;
  /// Features without enough labeled instances.
  std::vector<std::string> skipped;
};

/// Per feature: `splits` resampled holdout splits, each scored against the
/// better of the two baselines; one-sided corrected resampled t-test across
/// splits; Bonferroni cutoff over the features that were not skipped.
ScanReport run_feature_scan(const TypologyTable& table, const DeltaMatrix& matrix,
                            Condition condition, std::uint64_t seed, const ScanOptions& opts = {});

void write_scan_report(const ScanReport& report, const std::filesystem::path& path);
std::vector<TestResult> read_scan_report(const std::filesystem::path& path);

/// Synthetic typology with known structure. Feature "P" (when planted) is a
/// balanced binary feature; pairs that share its value get delta
/// +effect/2 and the others -effect/2, plus N(0, noise^2) everywhere.
/// Null features "N01".. take uniform values from {a, b} independent of the
/// deltas.
struct PlantedTypologySpec {
  std::size_t num_languages = 24;
  std::size_t null_features = 19;
  bool planted = true;
  double effect = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 0;
};

struct PlantedTypology {
  TypologyTable table;
  DeltaMatrix matrix;
};

PlantedTypology make_planted_typology(const PlantedTypologySpec& spec);

}  // namespace xmaml
