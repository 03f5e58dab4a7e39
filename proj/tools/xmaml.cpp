// xmaml command-line tool.
//
//   xmaml synth --out demo
//   xmaml pretrain --config demo/experiment.ini
//   xmaml meta --config demo/experiment.ini --aux hi,de
//   xmaml eval --config demo/experiment.ini --aux hi --mode few
//   xmaml sweep --config demo/experiment.ini --pairs
//   xmaml typology --wals demo/typology.csv --matrix run/sweep/delta_matrix.csv --condition match
//   xmaml selftest

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "xmaml/commands.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/selftest.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> runs;
  std::optional<std::string> order;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config file");
  if (needs_config) opt->required();
  cmd->add_option("--seed", c.seed, "root seed (overrides run.seed)");
  cmd->add_option("--out", c.out, "output directory (overrides run.out)");
  cmd->add_option("--runs", c.runs, "number of runs (overrides meta.runs)");
  cmd->add_option("--order", c.order, "meta-gradient order: full|first")
      ->check(CLI::IsMember({"full", "first"}));
}

xmaml::ExperimentConfig resolve(const Common& c) {
  xmaml::ExperimentConfig cfg = xmaml::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.out_dir = *c.out;
  if (c.runs) cfg.meta.num_runs = *c.runs;
  if (c.order) cfg.meta.order = xmaml::parse_order(*c.order);
  cfg.propagate_seed();
  return cfg;
}

std::vector<std::string> split_aux(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void report(const xmaml::CommandResult& r) {
  for (const auto& f : r.files) std::cout << f.string() << '\n';
  std::cout << r.manifest.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"X-MAML meta-learning engine and experiment harness"};
  app.require_subcommand(1);

  Common pre_c, meta_c, eval_c, sweep_c;
  std::optional<double> fraction;
  auto* pre = app.add_subcommand("pretrain", "pretrain on the source group");
  add_common(pre, pre_c);
  pre->add_option("--train-fraction", fraction, "share of the source data to train on")
      ->check(CLI::Range(0.0, 1.0));

  std::string meta_aux;
  auto* meta = app.add_subcommand("meta", "meta-learn on auxiliary groups");
  add_common(meta, meta_c);
  meta->add_option("--aux", meta_aux, "auxiliary groups, comma separated");

  std::string eval_aux, mode;
  bool baseline = false;
  auto* eval = app.add_subcommand("eval", "zero- or few-shot evaluation on the targets");
  add_common(eval, eval_c);
  eval->add_option("--aux", eval_aux, "auxiliary groups of the meta run to score");
  eval->add_option("--mode", mode, "zero|few")->check(CLI::IsMember({"zero", "few"}));
  eval->add_flag("--baseline", baseline, "score the pretrain checkpoint");

  bool pairs = false;
  auto* sweep = app.add_subcommand("sweep", "single-auxiliary delta matrix and optional pair search");
  add_common(sweep, sweep_c);
  sweep->add_flag("--pairs", pairs, "also search auxiliary pairs");

  std::string wals, matrix, condition = "value", typ_out = ".";
  std::uint64_t typ_seed = 0;
  std::size_t splits = 20;
  auto* typ = app.add_subcommand("typology", "feature scan over a delta matrix");
  typ->add_option("--wals", wals, "typology CSV (language,feature,value)")->required();
  typ->add_option("--matrix", matrix, "delta matrix CSV")->required();
  typ->add_option("--condition", condition, "value|match")->check(CLI::IsMember({"value", "match"}));
  typ->add_option("--seed", typ_seed, "root seed of the resampled splits");
  typ->add_option("--out", typ_out, "output directory");
  typ->add_option("--splits", splits, "resampled splits per feature");

  auto* self = app.add_subcommand("selftest", "finite-difference and closed-form oracle checks");

  std::string synth_out = "demo";
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic demo family and config");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) {
      auto cfg = resolve(pre_c);
      if (fraction) cfg.pretrain.train_fraction = *fraction;
      report(xmaml::cmd_pretrain(cfg));
    } else if (*meta) {
      auto cfg = resolve(meta_c);
      if (!meta_aux.empty()) cfg.plan.auxiliary = split_aux(meta_aux);
      report(xmaml::cmd_meta(cfg));
    } else if (*eval) {
      auto cfg = resolve(eval_c);
      if (!eval_aux.empty()) cfg.plan.auxiliary = split_aux(eval_aux);
      if (!mode.empty()) cfg.mode = xmaml::parse_mode(mode);
      report(xmaml::cmd_eval(cfg, baseline));
    } else if (*sweep) {
      report(xmaml::cmd_sweep(resolve(sweep_c), pairs));
    } else if (*typ) {
      xmaml::ScanOptions opts;
      opts.splits = splits;
      report(xmaml::cmd_typology(wals, matrix, xmaml::parse_condition(condition), typ_seed, typ_out, opts));
    } else if (*self) {
      bool ok = true;
      for (const auto& c : xmaml::run_selftest(&std::cout)) ok = ok && c.passed;
      return ok ? 0 : 1;
    } else if (*synth) {
      report(xmaml::cmd_synth(synth_out, synth_seed));
    }
  } catch (const xmaml::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
