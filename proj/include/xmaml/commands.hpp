#pragma once

// File-based pipeline steps behind the CLI verbs. Each writes into
// cfg.out_dir under a lock file and finishes with a JSON manifest listing
// the config hash, seeds, produced files and wall-clock timings.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xmaml/config.hpp"
#include "xmaml/eval.hpp"
#include "xmaml/typology.hpp"

namespace xmaml {

/// Exclusive marker file `.lock` in `dir`, removed on destruction. Throws
/// IoError when the directory is already locked.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Loads train/dev/test. num_classes == 0 is inferred from the train file
/// and shared with dev and test.
ExperimentData load_experiment_data(const ExperimentConfig& cfg);
ModelSpec model_spec(const ExperimentConfig& cfg, const ExperimentData& data);
SweepConfig sweep_config(const ExperimentConfig& cfg, const ModelSpec& spec);

std::filesystem::path pretrain_checkpoint_path(const ExperimentConfig& cfg);
/// Directory of the meta checkpoints for an auxiliary set, e.g. meta/de+hi.
std::filesystem::path meta_dir(const ExperimentConfig& cfg, std::vector<std::string> aux);

struct CommandResult {
  std::vector<std::filesystem::path> files;
  std::filesystem::path manifest;
};

CommandResult cmd_pretrain(const ExperimentConfig& cfg);
/// Needs a pretrain checkpoint whose hash matches cfg; otherwise throws
/// StaleCheckpointError. Writes run{r}.ckpt and loss_run{r}.csv per run.
CommandResult cmd_meta(const ExperimentConfig& cfg);
/// Scores the targets (pool minus auxiliaries). With `baseline` (or no
/// auxiliaries) the pretrain checkpoint is scored instead of the meta runs.
CommandResult cmd_eval(const ExperimentConfig& cfg, bool baseline = false);
CommandResult cmd_sweep(const ExperimentConfig& cfg, bool pairs);
CommandResult cmd_typology(const std::filesystem::path& wals, const std::filesystem::path& matrix,
                           Condition condition, std::uint64_t seed,
                           const std::filesystem::path& out_dir, const ScanOptions& opts = {});

/// Writes a small synthetic language family (train/dev/test CSVs, a config
/// and a typology table) for demos.
CommandResult cmd_synth(const std::filesystem::path& out_dir, std::uint64_t seed);

/// Per-target metrics CSV: `target,metric,mode,value,run0..`.
void write_eval_results(const std::vector<EvalResult>& rows, Mode mode,
                        const std::filesystem::path& path);
std::vector<EvalResult> read_eval_results(const std::filesystem::path& path);

}  // namespace xmaml
