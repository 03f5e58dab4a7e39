#include "xmaml/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "xmaml/checkpoint.hpp"
#include "xmaml/csv.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw IoError(dir.string() + " is locked by another run (" + path_.string() + ")");
    throw IoError("cannot create " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

fs::path write_manifest(const fs::path& path, json manifest, const std::vector<fs::path>& files) {
  json list = json::array();
  for (const auto& f : files) {
    if (!fs::exists(f)) throw IoError("declared output missing: " + f.string());
    list.push_back(f.string());
  }
  manifest["files"] = std::move(list);
  csv::write_file(path, manifest.dump(2) + "\n");
  return path;
}

std::string aux_tag(std::vector<std::string> aux) {
  std::sort(aux.begin(), aux.end());
  std::string tag;
  for (const auto& a : aux) tag += (tag.empty() ? "" : "+") + a;
  return tag;
}

void check_groups(const Corpus& corpus, const std::vector<std::string>& groups) {
  for (const auto& g : groups) {
    if (!corpus.has_group(g)) throw UnknownGroupError(g);
  }
}

Model load_model(const fs::path& path, const ModelSpec& spec, std::uint64_t expected_hash) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config_hash != expected_hash) {
    throw StaleCheckpointError(path.string() + " was written for config " + hex(ckpt.config_hash) +
                               ", current config is " + hex(expected_hash));
  }
  Model m;
  m.spec = spec;
  m.params = std::move(ckpt.params);
  m.params.require_same_structure(init_model(spec, 0).params);
  return m;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  for (const auto* p : {&cfg.train_path, &cfg.dev_path, &cfg.test_path}) {
    if (p->empty()) throw ArgumentError("config is missing a corpus path ([data] train/dev/test)");
  }
  Corpus train = load_corpus(cfg.train_path, cfg.task_kind, cfg.num_classes);
  const std::size_t classes = train.num_classes();
  Corpus dev = load_corpus(cfg.dev_path, cfg.task_kind, classes);
  Corpus test = load_corpus(cfg.test_path, cfg.task_kind, classes);
  if (dev.input_dim() != train.input_dim() || test.input_dim() != train.input_dim()) {
    throw StructureError("train, dev and test corpora differ in feature width");
  }
  return ExperimentData{std::move(train), std::move(dev), std::move(test)};
}

ModelSpec model_spec(const ExperimentConfig& cfg, const ExperimentData& data) {
  ModelSpec spec;
  spec.input_dim = data.train.input_dim();
  spec.hidden_dims = cfg.hidden_dims;
  spec.activation = cfg.activation;
  spec.task_kind = cfg.task_kind;
  spec.output_dim = cfg.task_kind == TaskKind::classification ? data.train.num_classes() : 1;
  spec.validate();
  return spec;
}

SweepConfig sweep_config(const ExperimentConfig& cfg, const ModelSpec& spec) {
  SweepConfig s;
  s.model = spec;
  s.pretrain = cfg.pretrain;
  s.meta = cfg.meta;
  s.finetune = cfg.finetune;
  s.plan = cfg.plan;
  s.mode = cfg.mode;
  s.metric = cfg.metric;
  s.seed = cfg.seed;
  return s;
}

fs::path pretrain_checkpoint_path(const ExperimentConfig& cfg) { return cfg.out_dir / "pretrain.ckpt"; }

fs::path meta_dir(const ExperimentConfig& cfg, std::vector<std::string> aux) {
  return cfg.out_dir / "meta" / aux_tag(std::move(aux));
}

CommandResult cmd_pretrain(const ExperimentConfig& cfg) {
  Stopwatch total;
  const ExperimentData data = load_experiment_data(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  cfg.plan.validate(false);
  check_groups(data.train, {cfg.plan.source});
  const SweepConfig scfg = sweep_config(cfg, spec);

  RunLock lock(cfg.out_dir);
  Stopwatch train_time;
  const Model model = pretrain_for_sweep(data, scfg);
  const double train_seconds = train_time.seconds();

  const fs::path ckpt = pretrain_checkpoint_path(cfg);
  save_checkpoint(ckpt, Checkpoint{cfg.pretrain_hash(), model.params});
  const fs::path config_copy = cfg.out_dir / "pretrain.config";
  csv::write_file(config_copy, serialize_config(cfg));

  const std::size_t source_size = data.train.indices(cfg.plan.source).size();
  json m;
  m["command"] = "pretrain";
  m["config_hash"] = hex(cfg.pretrain_hash());
  m["seeds"] = {{"root", cfg.seed},
                {"init", derive_seed(cfg.seed, "init")},
                {"pretrain", derive_seed(cfg.seed, "pretrain")}};
  m["source"] = cfg.plan.source;
  m["train_fraction"] = cfg.pretrain.train_fraction;
  m["source_size"] = source_size;
  m["subsample_size"] = subsample_size(source_size, cfg.pretrain.train_fraction);
  m["timings"] = {{"train_seconds", train_seconds}, {"total_seconds", total.seconds()}};
  CommandResult r;
  r.files = {ckpt, config_copy};
  r.manifest = write_manifest(cfg.out_dir / "pretrain.manifest.json", m, r.files);
  return r;
}

CommandResult cmd_meta(const ExperimentConfig& cfg) {
  Stopwatch total;
  const ExperimentData data = load_experiment_data(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  const LanguagePlan plan = cfg.plan.canonical();
  plan.validate(true);
  check_groups(data.dev, plan.auxiliary);
  cfg.meta.validate();
  const SweepConfig scfg = sweep_config(cfg, spec);

  const Model pretrained = load_model(pretrain_checkpoint_path(cfg), spec, cfg.pretrain_hash());
  RunLock lock(cfg.out_dir);
  const fs::path dir = meta_dir(cfg, plan.auxiliary);
  const std::size_t runs = std::max<std::size_t>(1, cfg.meta.num_runs);

  CommandResult r;
  json seeds = json::array();
  json timings = json::array();
  for (std::size_t run = 0; run < runs; ++run) {
    Stopwatch t;
    MetaConfig mc = cfg.meta;
    mc.seed = meta_run_seed(scfg, plan.auxiliary, run);
    MetaState trace;
    const Model learned = xmaml_meta_learn(pretrained, data.dev, plan, mc, &trace);
    // The header keeps the hash of the pretraining config the run started
    // from; the meta settings are checked through the manifest.
    const fs::path ckpt = dir / ("run" + std::to_string(run) + ".ckpt");
    save_checkpoint(ckpt, Checkpoint{cfg.pretrain_hash(), learned.params});
    std::ostringstream hist;
    hist << "iteration,loss\n";
    for (const auto& [it, loss] : trace.loss_history) hist << it << ',' << csv::format_double(loss) << '\n';
    const fs::path hist_path = dir / ("loss_run" + std::to_string(run) + ".csv");
    csv::write_file(hist_path, hist.str());
    r.files.push_back(ckpt);
    r.files.push_back(hist_path);
    seeds.push_back(mc.seed);
    timings.push_back(t.seconds());
  }
  json m;
  m["command"] = "meta";
  m["config_hash"] = hex(cfg.meta_hash());
  m["pretrain_hash"] = hex(cfg.pretrain_hash());
  m["auxiliary"] = plan.auxiliary;
  m["seeds"] = seeds;
  m["timings"] = {{"run_seconds", timings}, {"total_seconds", total.seconds()}};
  r.manifest = write_manifest(dir / "manifest.json", m, r.files);
  return r;
}

CommandResult cmd_eval(const ExperimentConfig& cfg, bool baseline) {
  Stopwatch total;
  const ExperimentData data = load_experiment_data(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  const LanguagePlan plan = cfg.plan.canonical();
  plan.validate(false);
  const bool use_pretrain = baseline || plan.auxiliary.empty();
  const std::vector<std::string> targets = plan.targets();
  check_groups(data.test, targets);
  if (cfg.mode == Mode::few) check_groups(data.dev, targets);
  const SweepConfig scfg = sweep_config(cfg, spec);
  const std::size_t runs = std::max<std::size_t>(1, cfg.meta.num_runs);

  std::vector<Model> models;
  const fs::path dir = meta_dir(cfg, plan.auxiliary);
  if (use_pretrain) {
    models.push_back(load_model(pretrain_checkpoint_path(cfg), spec, cfg.pretrain_hash()));
  } else {
    const fs::path manifest_path = dir / "manifest.json";
    const auto lines = csv::read_lines(manifest_path);
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    const json manifest = json::parse(text);
    if (manifest.value("config_hash", "") != hex(cfg.meta_hash())) {
      throw StaleCheckpointError(dir.string() + " was meta-learned with a different config");
    }
    for (std::size_t run = 0; run < runs; ++run) {
      models.push_back(load_model(dir / ("run" + std::to_string(run) + ".ckpt"), spec, cfg.pretrain_hash()));
    }
  }

  RunLock lock(cfg.out_dir);
  std::vector<EvalResult> rows;
  for (const auto& t : targets) {
    std::vector<double> values;
    for (std::size_t run = 0; run < runs; ++run) {
      values.push_back(run_score(models[use_pretrain ? 0 : run], data, t, scfg, run));
    }
    rows.push_back(EvalResult::from_runs(t, cfg.metric, std::move(values)));
  }
  const std::string tag = use_pretrain ? std::string("baseline") : aux_tag(plan.auxiliary);
  const fs::path out = cfg.out_dir / "eval" / (tag + "_" + to_string(cfg.mode) + ".csv");
  write_eval_results(rows, cfg.mode, out);

  json m;
  m["command"] = "eval";
  m["config_hash"] = hex(cfg.hash());
  m["mode"] = to_string(cfg.mode);
  m["source"] = use_pretrain ? "pretrain" : "meta";
  json seeds = json::object();
  for (const auto& t : targets) {
    json per = json::array();
    for (std::size_t run = 0; run < runs; ++run) per.push_back(finetune_run_seed(scfg, t, run));
    seeds[t] = per;
  }
  m["finetune_seeds"] = seeds;
  m["timings"] = {{"total_seconds", total.seconds()}};
  CommandResult r;
  r.files = {out};
  r.manifest = write_manifest(cfg.out_dir / "eval" / (tag + "_" + to_string(cfg.mode) + ".manifest.json"),
                              m, r.files);
  return r;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg, bool pairs) {
  Stopwatch total;
  const ExperimentData data = load_experiment_data(cfg);
  const ModelSpec spec = model_spec(cfg, data);
  cfg.plan.validate(false);
  const std::size_t need = pairs ? 3 : 2;
  if (cfg.plan.pool.size() < need) {
    throw ArgumentError("sweep needs >= " + std::to_string(need) + " pool groups, got " +
                        std::to_string(cfg.plan.pool.size()));
  }
  check_groups(data.train, {cfg.plan.source});
  check_groups(data.dev, cfg.plan.pool);
  check_groups(data.test, cfg.plan.pool);
  cfg.meta.validate();
  const SweepConfig scfg = sweep_config(cfg, spec);

  RunLock lock(cfg.out_dir);
  const fs::path dir = cfg.out_dir / "sweep";
  CommandResult r;
  const DeltaMatrix matrix = sweep_single_aux(data, scfg);
  const fs::path matrix_csv = dir / "delta_matrix.csv";
  const fs::path baseline_csv = dir / "baseline.csv";
  const fs::path agg_csv = dir / "avg_max.csv";
  write_delta_matrix(matrix, matrix_csv, baseline_csv);
  write_aggregates(aggregate_avg_max(matrix), agg_csv);
  r.files = {matrix_csv, baseline_csv, agg_csv};
  if (pairs) {
    const PairSweep ps = sweep_pair_aux(data, scfg);
    const fs::path best_csv = dir / "best_pairs.csv";
    write_best_pairs(ps, best_csv);
    r.files.push_back(best_csv);
  }
  json m;
  m["command"] = "sweep";
  m["config_hash"] = hex(cfg.hash());
  m["pairs"] = pairs;
  m["seeds"] = {{"root", cfg.seed}};
  m["timings"] = {{"total_seconds", total.seconds()}};
  r.manifest = write_manifest(dir / "manifest.json", m, r.files);
  return r;
}

CommandResult cmd_typology(const fs::path& wals, const fs::path& matrix_path, Condition condition,
                           std::uint64_t seed, const fs::path& out_dir, const ScanOptions& opts) {
  Stopwatch total;
  const TypologyTable table = load_typology(wals);
  const DeltaMatrix matrix = read_delta_matrix(matrix_path);
  RunLock lock(out_dir);
  const ScanReport report = run_feature_scan(table, matrix, condition, seed, opts);
  const fs::path out = out_dir / ("typology_" + to_string(condition) + ".csv");
  write_scan_report(report, out);

  json m;
  m["command"] = "typology";
  m["condition"] = to_string(condition);
  m["seed"] = seed;
  m["splits"] = opts.splits;
  m["eligible"] = report.results.size();
  m["skipped"] = report.skipped;
  m["timings"] = {{"total_seconds", total.seconds()}};
  CommandResult r;
  r.files = {out};
  r.manifest = write_manifest(out_dir / ("typology_" + to_string(condition) + ".manifest.json"), m, r.files);
  return r;
}

CommandResult cmd_synth(const fs::path& out_dir, std::uint64_t seed) {
  SyntheticFamilySpec spec;
  spec.names = {"en", "de", "es", "hi", "ur"};
  spec.num_languages = spec.names.size();
  // en and de share no offsets, es and de differ by one, hi and ur share two.
  spec.feature_bits = {{0, 0, 0}, {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {0, 1, 0}};
  spec.base_seed = seed;
  spec.bit_scale = 0.6;
  spec.noise_std = 0.3;

  RunLock lock(out_dir);
  const auto corpus = [&](const char* label, std::size_t n) {
    SyntheticFamilySpec s = spec;
    s.samples_per_language = n;
    s.sample_seed = derive_seed(seed, label);
    return gen_synthetic_family(s);
  };
  const fs::path train = out_dir / "train.csv";
  const fs::path dev = out_dir / "dev.csv";
  const fs::path test = out_dir / "test.csv";
  save_corpus(corpus("train", 1000).restrict_to("en"), train);
  save_corpus(corpus("dev", 200), dev);
  save_corpus(corpus("test", 500), test);

  TypologyTable table;
  const char* features[] = {"F1", "F2", "F3"};
  for (std::size_t l = 0; l < spec.num_languages; ++l) {
    for (std::size_t f = 0; f < 3; ++f) {
      table.set(spec.names[l], features[f], spec.feature_bits[l][f] ? "yes" : "no");
    }
  }
  const fs::path wals = out_dir / "typology.csv";
  save_typology(table, wals);

  ExperimentConfig cfg;
  cfg.train_path = "train.csv";
  cfg.dev_path = "dev.csv";
  cfg.test_path = "test.csv";
  cfg.hidden_dims = {16};
  cfg.pretrain.epochs = 5;
  cfg.pretrain.lr = 1e-2;
  cfg.meta.alpha = 1e-2;
  cfg.meta.beta = 1e-3;
  cfg.meta.meta_iterations = 50;
  cfg.meta.num_runs = 3;
  cfg.plan.source = "en";
  cfg.plan.pool = {"de", "es", "hi", "ur"};
  cfg.plan.auxiliary = {"hi"};
  cfg.out_dir = "run";
  cfg.seed = seed;
  const fs::path config = out_dir / "experiment.ini";
  csv::write_file(config, serialize_config(cfg));

  json m;
  m["command"] = "synth";
  m["seed"] = seed;
  CommandResult r;
  r.files = {train, dev, test, wals, config};
  r.manifest = write_manifest(out_dir / "synth.manifest.json", m, r.files);
  return r;
}

void write_eval_results(const std::vector<EvalResult>& rows, Mode mode, const fs::path& path) {
  std::size_t runs = 0;
  for (const auto& r : rows) runs = std::max(runs, r.per_run_values.size());
  std::ostringstream out;
  out << "target,metric,mode,value";
  for (std::size_t i = 0; i < runs; ++i) out << ",run" << i;
  out << '\n';
  for (const auto& r : rows) {
    out << r.group << ',' << to_string(r.metric) << ',' << to_string(mode) << ','
        << csv::format_double(r.value);
    for (std::size_t i = 0; i < runs; ++i) {
      out << ',';
      if (i < r.per_run_values.size()) out << csv::format_double(r.per_run_values[i]);
    }
    out << '\n';
  }
  csv::write_file(path, out.str());
}

std::vector<EvalResult> read_eval_results(const fs::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw FormatError("empty metrics file", 1);
  const auto header = csv::split(lines[0]);
  std::vector<EvalResult> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split(lines[i]);
    if (f.size() != header.size() || f.size() < 4) throw FormatError("ragged metrics row", i + 1);
    EvalResult r;
    r.group = f[0];
    r.metric = parse_metric(f[1]);
    if (!csv::parse_double(f[3], r.value)) throw FormatError("bad value", i + 1);
    for (std::size_t j = 4; j < f.size(); ++j) {
      if (f[j].empty()) continue;
      double v = 0.0;
      if (!csv::parse_double(f[j], v)) throw FormatError("bad run value", i + 1);
      r.per_run_values.push_back(v);
    }
    r.num_runs = r.per_run_values.size();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace xmaml
