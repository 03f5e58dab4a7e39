#pragma once

// Experiment configuration: an INI-style text file with [section] headers
// and `key = value` lines ('#' starts a comment). Every key has a default;
// the canonical form lists all effective values as sorted
// `section.key=value` lines, so the hash does not depend on key order,
// spacing or comments.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xmaml/eval.hpp"
#include "xmaml/meta.hpp"
#include "xmaml/model.hpp"

namespace xmaml {

struct ExperimentConfig {
  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::filesystem::path test_path;
  TaskKind task_kind = TaskKind::classification;
  /// 0 = infer from the training corpus.
  std::size_t num_classes = 0;

  std::vector<std::size_t> hidden_dims{32};
  Activation activation = Activation::tanh;

  PretrainConfig pretrain;
  MetaConfig meta;
  FineTuneConfig finetune;
  LanguagePlan plan;
  Mode mode = Mode::zero;
  Metric metric = Metric::accuracy;
  std::filesystem::path out_dir = "runs";
  std::uint64_t seed = 0;

  /// Pushes the root seed into the component configs.
  void propagate_seed();

  /// Sorted `section.key=value` lines.
  std::string canonical() const;
  std::uint64_t hash() const;
  /// Hash of the settings that determine the pretrained checkpoint (data,
  /// model, pretrain, seed).
  std::uint64_t pretrain_hash() const;
  /// Hash of pretrain settings plus meta and plan settings.
  std::uint64_t meta_hash() const;
};

/// Parses config text. Unknown sections or keys and malformed values throw
/// FormatError with the line number. Relative corpus paths are resolved
/// against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace xmaml
