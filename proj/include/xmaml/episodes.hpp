#pragma once

// Task distributions: labeled corpora grouped by language (or genre),
// episodic support/query sampling, training-fraction subsampling and the
// synthetic task generators used for desk-scale experiments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmaml/model.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {

struct Record {
  std::string group;
  std::vector<double> features;
  double label = 0.0;
};

/// Labeled feature vectors tagged with a group id. Row order is kept.
class Corpus {
 public:
  Corpus(std::size_t input_dim, TaskKind kind, std::size_t num_classes);

  /// Throws StructureError on a width mismatch, LabelError on an invalid
  /// class label.
  void add(Record record);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t input_dim() const { return input_dim_; }
  TaskKind kind() const { return kind_; }
  std::size_t num_classes() const { return num_classes_; }

  /// Group ids in order of first appearance.
  const std::vector<std::string>& groups() const { return group_order_; }
  bool has_group(const std::string& group) const;
  /// Row indices of `group`. Throws UnknownGroupError.
  const std::vector<std::size_t>& indices(const std::string& group) const;

  Batch batch(std::span<const std::size_t> rows) const;
  /// Every record of `group`; throws UnknownGroupError.
  Batch group_batch(const std::string& group) const;
  /// Records of the listed groups, original order.
  Corpus restrict_to(std::span<const std::string> groups) const;
  Corpus restrict_to(const std::string& group) const;

 private:
  std::size_t input_dim_;
  TaskKind kind_;
  std::size_t num_classes_;
  std::vector<Record> records_;
  std::vector<std::string> group_order_;
  std::map<std::string, std::vector<std::size_t>> index_;
};

/// Reads `group,label,f0,...,f{d-1}` CSV. `num_classes` 0 infers
/// max(label)+1 (at least 2) for classification.
Corpus load_corpus(const std::filesystem::path& path,
                   TaskKind kind = TaskKind::classification,
                   std::size_t num_classes = 0);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// ceil(fraction * n) records without replacement, stratified by group
/// (and by class for classifiers). Deterministic in seed.
Corpus subsample_fraction(const Corpus& corpus, double fraction, std::uint64_t seed);
std::size_t subsample_size(std::size_t n, double fraction);

/// One task instance: K support rows for adaptation and Q disjoint query
/// rows for the meta-objective.
struct Episode {
  std::string group;
  Batch support;
  Batch query;
  std::vector<std::size_t> support_rows;
  std::vector<std::size_t> query_rows;
};

/// K+Q distinct rows of `group`; the first K form the support set.
/// Throws InsufficientDataError when the group is too small.
Episode sample_episode(const Corpus& corpus, const std::string& group, std::size_t k,
                       std::size_t q, Rng& rng);

/// Source group, candidate pool, and the auxiliary subset used for
/// meta-learning. Targets are the pool minus the auxiliaries.
struct LanguagePlan {
  std::string source;
  std::vector<std::string> pool;
  std::vector<std::string> auxiliary;

  std::vector<std::string> targets() const;
  /// auxiliary within pool, source outside pool, auxiliary non-empty when
  /// `require_auxiliary`.
  void validate(bool require_auxiliary = true) const;
  /// Auxiliaries sorted, duplicates removed.
  LanguagePlan canonical() const;
};

/// y = amplitude * sin(x + phase).
struct SinusoidTask {
  double amplitude = 1.0;
  double phase = 0.0;
  double operator()(double x) const;
};

/// amplitude ~ U[0.1, 5], phase ~ U[0, pi].
SinusoidTask draw_sinusoid_task(Rng& rng);
/// n points with x ~ U[-5, 5], noiseless targets.
Batch sample_sinusoid_points(const SinusoidTask& task, Rng& rng, std::size_t n);
Episode gen_sinusoid_episode(Rng& rng, std::size_t k, std::size_t q,
                             SinusoidTask* drawn = nullptr);

/// Binary-classification "languages" whose decision boundaries are a base
/// direction plus one orthogonal offset per set typological bit, so the
/// distance between two boundaries is bit_scale * sqrt(hamming distance).
struct SyntheticFamilySpec {
  std::size_t num_languages = 0;
  std::vector<std::vector<int>> feature_bits;
  std::uint64_t base_seed = 0;
  std::size_t samples_per_language = 100;
  double noise_std = 0.0;
  std::size_t input_dim = 8;
  double bit_scale = 1.0;
  /// Seeds the drawn inputs separately from the boundaries (defaults to
  /// base_seed), so train/dev/test splits share one family.
  std::optional<std::uint64_t> sample_seed;
  /// Group ids; defaults to L0, L1, ...
  std::vector<std::string> names;

  void validate() const;
  std::string name(std::size_t language) const;
};

/// Boundary normal of each language, before input noise.
std::vector<std::vector<double>> family_boundaries(const SyntheticFamilySpec& spec);
Corpus gen_synthetic_family(const SyntheticFamilySpec& spec);

}  // namespace xmaml
