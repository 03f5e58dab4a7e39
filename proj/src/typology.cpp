#include "xmaml/typology.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "xmaml/csv.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {

std::optional<std::string> TypologyTable::value(const std::string& language,
                                                const std::string& feature) const {
  const auto it = cells_.find({language, feature});
  if (it == cells_.end()) return std::nullopt;
  return it->second.value;
}

void TypologyTable::set(const std::string& language, const std::string& feature, std::string value,
                        std::size_t line) {
  const auto key = std::make_pair(language, feature);
  const auto it = cells_.find(key);
  if (it != cells_.end()) throw DuplicateCellError(language, feature, it->second.line, line);
  if (std::find(languages_.begin(), languages_.end(), language) == languages_.end()) {
    languages_.push_back(language);
  }
  if (std::find(features_.begin(), features_.end(), feature) == features_.end()) {
    features_.push_back(feature);
  }
  cells_.emplace(key, Cell{std::move(value), line});
}

std::vector<std::string> TypologyTable::domain(const std::string& feature) const {
  std::vector<std::string> out;
  for (const auto& [key, cell] : cells_) {
    if (key.second == feature) out.push_back(cell.value);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TypologyTable load_typology(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw FormatError("empty typology file", 1);
  const auto header = csv::split(lines[0]);
  if (header != std::vector<std::string>{"language", "feature", "value"}) {
    throw FormatError("typology header must be language,feature,value", 1);
  }
  TypologyTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = csv::split(lines[i]);
    if (fields.size() != 3) throw FormatError("expected 3 fields", i + 1);
    if (fields[0].empty() || fields[1].empty()) throw FormatError("empty language or feature", i + 1);
    table.set(fields[0], fields[1], std::move(fields[2]), i + 1);
  }
  return table;
}

void save_typology(const TypologyTable& table, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "language,feature,value\n";
  for (const auto& lang : table.languages()) {
    for (const auto& feat : table.features()) {
      if (auto v = table.value(lang, feat)) out << lang << ',' << feat << ',' << *v << '\n';
    }
  }
  csv::write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Logistic regression

std::vector<double> LogisticModel::logits(std::span<const double> x) const {
  if (x.size() != input_dim) throw StructureError("logistic input has the wrong width");
  std::vector<double> z(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& w = weights[c];
    double s = w[input_dim];
    for (std::size_t j = 0; j < input_dim; ++j) s += w[j] * x[j];
    z[c] = s;
  }
  return z;
}

int LogisticModel::predict(std::span<const double> x) const {
  const auto z = logits(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < z.size(); ++c) {
    if (z[c] > z[best]) best = c;
  }
  return static_cast<int>(best);
}

namespace {

void check_logistic_inputs(const std::vector<std::vector<double>>& features,
                           std::span<const int> labels) {
  if (features.empty()) throw ArgumentError("fit_logistic needs at least one instance");
  if (features.size() != labels.size()) throw StructureError("features and labels differ in length");
  const std::size_t d = features[0].size();
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) throw StructureError("ragged feature matrix");
    for (double v : features[i]) {
      if (!std::isfinite(v)) throw NonFiniteError("non-finite feature in row " + std::to_string(i));
    }
    if (labels[i] < 0) throw LabelError("negative class label");
  }
}

// Softmax probabilities of one row, written into `p`.
void softmax(const std::vector<double>& z, std::vector<double>& p) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    p[c] = std::exp(z[c] - mx);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
}

}  // namespace

double logistic_objective(const LogisticModel& model,
                          const std::vector<std::vector<double>>& features,
                          std::span<const int> labels, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto z = model.logits(features[i]);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    loss += mx + std::log(sum) - z[static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<double>(features.size());
  double reg = 0.0;
  for (const auto& w : model.weights) {
    for (std::size_t j = 0; j < model.input_dim; ++j) reg += w[j] * w[j];
  }
  return loss + 0.5 * l2 * reg;
}

LogisticModel fit_logistic(const std::vector<std::vector<double>>& features,
                           std::span<const int> labels, const LogisticOptions& opts,
                           std::vector<double>* loss_trace) {
  check_logistic_inputs(features, labels);
  if (!(opts.lr > 0.0) || !(opts.l2 >= 0.0)) throw ArgumentError("fit_logistic needs lr > 0, l2 >= 0");
  const std::size_t n = features.size();
  const std::size_t d = features[0].size();
  LogisticModel model;
  model.input_dim = d;
  model.num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  model.weights.assign(model.num_classes, std::vector<double>(d + 1, 0.0));

  const std::size_t classes = model.num_classes;
  std::vector<std::vector<double>> grad(classes, std::vector<double>(d + 1, 0.0));
  std::vector<double> p(classes);
  if (loss_trace) loss_trace->clear();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (loss_trace) loss_trace->push_back(logistic_objective(model, features, labels, opts.l2));
    for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      softmax(model.logits(features[i]), p);
      p[static_cast<std::size_t>(labels[i])] -= 1.0;
      for (std::size_t c = 0; c < classes; ++c) {
        auto& g = grad[c];
        const double r = p[c] * inv_n;
        for (std::size_t j = 0; j < d; ++j) g[j] += r * features[i][j];
        g[d] += r;
      }
    }
    for (std::size_t c = 0; c < classes; ++c) {
      auto& w = model.weights[c];
      for (std::size_t j = 0; j < d; ++j) w[j] -= opts.lr * (grad[c][j] + opts.l2 * w[j]);
      w[d] -= opts.lr * grad[c][d];
    }
  }
  if (loss_trace) loss_trace->push_back(logistic_objective(model, features, labels, opts.l2));
  return model;
}

// ---------------------------------------------------------------------------
// Baselines

namespace {

std::string modal_label(std::span<const std::string> train) {
  std::map<std::string, std::size_t> counts;
  for (const auto& v : train) ++counts[v];
  // std::map iterates in lexicographic order, so strict > keeps the
  // smallest value among ties.
  const std::string* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& [v, c] : counts) {
    if (c > best_count) {
      best = &v;
      best_count = c;
    }
  }
  return *best;
}

}  // namespace

double baseline_most_frequent(std::span<const std::string> train, std::span<const std::string> test) {
  if (train.empty()) throw EmptyInputError("baseline_most_frequent needs training labels");
  if (test.empty()) throw EmptyInputError("baseline_most_frequent needs test labels");
  const std::string mode = modal_label(train);
  std::size_t hits = 0;
  for (const auto& v : test) hits += (v == mode);
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double baseline_distributional(std::span<const std::string> train,
                               std::span<const std::string> test, std::uint64_t seed,
                               std::size_t trials) {
  if (train.empty()) throw EmptyInputError("baseline_distributional needs training labels");
  if (test.empty()) throw EmptyInputError("baseline_distributional needs test labels");
  if (trials < 1) throw ArgumentError("baseline_distributional needs trials >= 1");
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t hits = 0;
    for (const auto& v : test) hits += (train[rng.below(train.size())] == v);
    total += static_cast<double>(hits) / static_cast<double>(test.size());
  }
  return total / static_cast<double>(trials);
}

// ---------------------------------------------------------------------------
// Conditions

double ConditionOutcome::best_baseline() const {
  return std::max(most_frequent_accuracy, distributional_accuracy);
}

namespace {

struct Instances {
  std::vector<std::vector<double>> inputs;
  std::vector<std::string> labels;
};

// Leave-one-out over a seeded subsample of the instances. Inputs are
// standardized with statistics of each training fold.
struct FoldScore {
  double model_hits = 0.0;
  double most_frequent_hits = 0.0;
  double distributional_hits = 0.0;
};

// Fit on `train` (inputs standardized with train statistics) and score every
// instance of `test`.
FoldScore score_fold(const Instances& data, const std::vector<std::size_t>& train,
                     const std::vector<std::size_t>& test, std::uint64_t dist_seed,
                     const ConditionOptions& opts) {
  const std::size_t d = data.inputs[0].size();
  std::vector<std::string> train_labels, test_labels;
  for (std::size_t i : train) train_labels.push_back(data.labels[i]);
  for (std::size_t i : test) test_labels.push_back(data.labels[i]);
  std::vector<std::string> domain = train_labels;
  std::sort(domain.begin(), domain.end());
  domain.erase(std::unique(domain.begin(), domain.end()), domain.end());

  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  for (std::size_t i : train) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += data.inputs[i][j];
  }
  for (double& m : mean) m /= static_cast<double>(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (std::size_t i : train) {
      const double e = data.inputs[i][j] - mean[j];
      ss += e * e;
    }
    const double sd = std::sqrt(ss / static_cast<double>(train.size()));
    if (sd > 0.0) scale[j] = 1.0 / sd;
  }
  auto standardize = [&](const std::vector<double>& x) {
    std::vector<double> z(d);
    for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - mean[j]) * scale[j];
    return z;
  };

  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (std::size_t i : train) {
    xs.push_back(standardize(data.inputs[i]));
    ys.push_back(static_cast<int>(std::lower_bound(domain.begin(), domain.end(), data.labels[i]) -
                                  domain.begin()));
  }
  const LogisticModel model = fit_logistic(xs, ys, opts.logistic);
  FoldScore out;
  for (std::size_t i : test) {
    const int predicted = model.predict(standardize(data.inputs[i]));
    out.model_hits += domain[static_cast<std::size_t>(predicted)] == data.labels[i] ? 1.0 : 0.0;
  }
  const double k = static_cast<double>(test.size());
  out.most_frequent_hits = k * baseline_most_frequent(train_labels, test_labels);
  out.distributional_hits =
      k * baseline_distributional(train_labels, test_labels, dist_seed, opts.distributional_trials);
  return out;
}

ConditionOutcome cross_validate(const Instances& data, std::uint64_t split_seed,
                                const ConditionOptions& opts) {
  const std::size_t n = data.inputs.size();
  if (n < 4) {
    throw InsufficientLanguagesError("condition needs >= 4 labeled instances, got " +
                                     std::to_string(n));
  }
  if (!(opts.holdout_fraction >= 0.0 && opts.holdout_fraction < 1.0)) {
    throw ArgumentError("holdout_fraction must be in [0, 1)");
  }
  ConditionOutcome out;
  out.instances = n;
  FoldScore total;
  double scored = 0.0;
  if (opts.holdout_fraction == 0.0) {
    for (std::size_t held = 0; held < n; ++held) {
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < n; ++i) {
        if (i != held) train.push_back(i);
      }
      const FoldScore f =
          score_fold(data, train, {held}, derive_seed(split_seed, "distributional", {held}), opts);
      total.model_hits += f.model_hits;
      total.most_frequent_hits += f.most_frequent_hits;
      total.distributional_hits += f.distributional_hits;
    }
    scored = static_cast<double>(n);
    out.test_train_ratio = 1.0 / static_cast<double>(n - 1);
  } else {
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(opts.holdout_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 3);
    Rng rng(derive_seed(split_seed, "split"));
    std::vector<std::size_t> perm = rng.sample_without_replacement(n, n);
    std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    total = score_fold(data, train, test, derive_seed(split_seed, "distributional"), opts);
    scored = static_cast<double>(n_test);
    out.test_train_ratio = static_cast<double>(n_test) / static_cast<double>(train.size());
  }
  out.model_accuracy = total.model_hits / scored;
  out.most_frequent_accuracy = total.most_frequent_hits / scored;
  out.distributional_accuracy = total.distributional_hits / scored;
  return out;
}

std::unordered_map<std::string, std::size_t> index_of(const std::vector<std::string>& names) {
  std::unordered_map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], i);
  return out;
}

}  // namespace

ConditionOutcome condition_value_prediction(const TypologyTable& table, const DeltaMatrix& matrix,
                                            const std::string& feature, std::uint64_t split_seed,
                                            const ConditionOptions& opts) {
  std::vector<std::string> languages = matrix.targets;
  for (const auto& a : matrix.auxiliaries) {
    if (std::find(languages.begin(), languages.end(), a) == languages.end()) languages.push_back(a);
  }
  const auto row_of = index_of(matrix.targets);
  const auto col_of = index_of(matrix.auxiliaries);

  Instances data;
  for (const auto& lang : languages) {
    auto v = table.value(lang, feature);
    if (!v) continue;
    std::vector<double> x(matrix.auxiliaries.size() + matrix.targets.size(), 0.0);
    if (auto r = row_of.find(lang); r != row_of.end()) {
      for (std::size_t j = 0; j < matrix.auxiliaries.size(); ++j) {
        x[j] = matrix.deltas[r->second][j].value_or(0.0);
      }
    }
    if (auto c = col_of.find(lang); c != col_of.end()) {
      for (std::size_t i = 0; i < matrix.targets.size(); ++i) {
        x[matrix.auxiliaries.size() + i] = matrix.deltas[i][c->second].value_or(0.0);
      }
    }
    data.inputs.push_back(std::move(x));
    data.labels.push_back(std::move(*v));
  }
  return cross_validate(data, split_seed, opts);
}

ConditionOutcome condition_match_prediction(const TypologyTable& table, const DeltaMatrix& matrix,
                                            const std::string& feature, std::uint64_t split_seed,
                                            const ConditionOptions& opts) {
  Instances data;
  for (std::size_t i = 0; i < matrix.targets.size(); ++i) {
    const auto tv = table.value(matrix.targets[i], feature);
    if (!tv) continue;
    for (std::size_t j = 0; j < matrix.auxiliaries.size(); ++j) {
      const auto& d = matrix.deltas[i][j];
      if (!d || matrix.auxiliaries[j] == matrix.targets[i]) continue;
      const auto av = table.value(matrix.auxiliaries[j], feature);
      if (!av) continue;
      data.inputs.push_back({*d});
      data.labels.push_back(*tv == *av ? "same" : "different");
    }
  }
  return cross_validate(data, split_seed, opts);
}

std::string to_string(Condition c) { return c == Condition::value ? "value" : "match"; }

Condition parse_condition(const std::string& text) {
  if (text == "value") return Condition::value;
  if (text == "match") return Condition::match;
  throw ArgumentError("unknown condition '" + text + "' (expected value|match)");
}

// ---------------------------------------------------------------------------
// Feature scan

ScanReport run_feature_scan(const TypologyTable& table, const DeltaMatrix& matrix,
                            Condition condition, std::uint64_t seed, const ScanOptions& opts) {
  if (opts.splits < 2) throw ArgumentError("feature scan needs >= 2 splits");
  if (opts.condition.holdout_fraction <= 0.0) {
    throw ArgumentError("feature scan needs resampled holdout splits (holdout_fraction > 0)");
  }
  ScanReport report;
  for (const auto& feature : table.features()) {
    std::vector<double> model_acc, base_acc;
    double ratio = 0.0;
    try {
      for (std::size_t s = 0; s < opts.splits; ++s) {
        const std::uint64_t split_seed = derive_seed(seed, "scan", {fnv1a(feature), s});
        const ConditionOutcome o =
            condition == Condition::value
                ? condition_value_prediction(table, matrix, feature, split_seed, opts.condition)
                : condition_match_prediction(table, matrix, feature, split_seed, opts.condition);
        model_acc.push_back(o.model_accuracy);
        base_acc.push_back(o.best_baseline());
        ratio += o.test_train_ratio / static_cast<double>(opts.splits);
      }
    } catch (const InsufficientLanguagesError&) {
      report.skipped.push_back(feature);
      continue;
    }
    const TTestResult t = corrected_resampled_t_test(model_acc, base_acc, ratio);
    TestResult r;
    r.feature_id = feature;
    r.t_statistic = t.t;
    r.degrees_of_freedom = t.df;
    r.p_value = t.p;
    r.zero_variance = t.zero_variance;
    double ms = 0.0, bs = 0.0;
    for (std::size_t s = 0; s < model_acc.size(); ++s) {
      ms += model_acc[s];
      bs += base_acc[s];
    }
    r.model_acc_mean = ms / static_cast<double>(model_acc.size());
    r.baseline_acc_mean = bs / static_cast<double>(base_acc.size());
    report.results.push_back(std::move(r));
  }
  if (!report.results.empty()) {
    const double cutoff = bonferroni(opts.base_cutoff, report.results.size());
    for (auto& r : report.results) {
      r.num_tests = report.results.size();
      r.corrected_cutoff = cutoff;
      r.significant = r.p_value < cutoff;
    }
  }
  std::stable_sort(report.results.begin(), report.results.end(),
                   [](const TestResult& a, const TestResult& b) { return a.p_value < b.p_value; });
  return report;
}

void write_scan_report(const ScanReport& report, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "feature,t,df,p,m,cutoff,significant,model_acc_mean,baseline_acc_mean\n";
  for (const auto& r : report.results) {
    out << r.feature_id << ',' << csv::format_double(r.t_statistic) << ',' << r.degrees_of_freedom
        << ',' << csv::format_double(r.p_value) << ',' << r.num_tests << ','
        << csv::format_double(r.corrected_cutoff) << ',' << (r.significant ? "true" : "false") << ','
        << csv::format_double(r.model_acc_mean) << ',' << csv::format_double(r.baseline_acc_mean)
        << '\n';
  }
  csv::write_file(path, out.str());
}

std::vector<TestResult> read_scan_report(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw FormatError("empty scan report", 1);
  std::vector<TestResult> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split(lines[i]);
    if (f.size() != 9) throw FormatError("expected 9 fields", i + 1);
    TestResult r;
    r.feature_id = f[0];
    long long df = 0, m = 0;
    if (!csv::parse_double(f[1], r.t_statistic) || !csv::parse_int(f[2], df) ||
        !csv::parse_double(f[3], r.p_value) || !csv::parse_int(f[4], m) ||
        !csv::parse_double(f[5], r.corrected_cutoff) || !csv::parse_double(f[7], r.model_acc_mean) ||
        !csv::parse_double(f[8], r.baseline_acc_mean) || (f[6] != "true" && f[6] != "false")) {
      throw FormatError("malformed scan report row", i + 1);
    }
    r.degrees_of_freedom = static_cast<std::size_t>(df);
    r.num_tests = static_cast<std::size_t>(m);
    r.significant = f[6] == "true";
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic tables

PlantedTypology make_planted_typology(const PlantedTypologySpec& spec) {
  if (spec.num_languages < 4) throw ArgumentError("planted typology needs >= 4 languages");
  Rng rng(derive_seed(spec.seed, "planted_typology"));
  const std::size_t n = spec.num_languages;
  PlantedTypology out;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("L" + std::to_string(i));

  std::vector<std::string> planted(n);
  for (std::size_t i = 0; i < n; ++i) planted[i] = i < n / 2 ? "a" : "b";
  rng.shuffle(planted);
  if (spec.planted) {
    for (std::size_t i = 0; i < n; ++i) out.table.set(names[i], "P", planted[i]);
  }
  for (std::size_t f = 1; f <= spec.null_features; ++f) {
    const std::string id = (f < 10 ? "N0" : "N") + std::to_string(f);
    for (std::size_t i = 0; i < n; ++i) out.table.set(names[i], id, rng.below(2) == 0 ? "a" : "b");
  }

  out.matrix.targets = names;
  out.matrix.auxiliaries = names;
  out.matrix.deltas.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t a = 0; a < n; ++a) {
      if (t == a) continue;
      double d = spec.noise * rng.normal();
      if (spec.planted) d += (planted[t] == planted[a] ? 0.5 : -0.5) * spec.effect;
      out.matrix.deltas[t][a] = d;
    }
    out.matrix.baseline.push_back(EvalResult::from_runs(names[t], Metric::accuracy, {0.0}));
  }
  return out;
}

}  // namespace xmaml
