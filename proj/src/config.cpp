#include "xmaml/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include "xmaml/csv.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/rng.hpp"

namespace xmaml {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  for (auto& f : csv::split(text)) {
    std::string t = trim(f);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) { return csv::join(items); }

double to_double(const std::string& v) {
  double out = 0.0;
  if (!csv::parse_double(v, out)) throw ArgumentError("expected a number, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& v) {
  long long out = 0;
  if (!csv::parse_int(v, out) || out < 0) {
    throw ArgumentError("expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ArgumentError("expected an unsigned integer, got '" + v + "'");
  return out;
}

struct Key {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::map<std::string, Key>& keys() {
  using C = ExperimentConfig;
  using S = std::string;
  static const std::map<std::string, Key> table = {
      {"data.train", {[](const C& c) { return c.train_path.string(); },
                      [](C& c, const S& v) { c.train_path = v; }}},
      {"data.dev", {[](const C& c) { return c.dev_path.string(); },
                    [](C& c, const S& v) { c.dev_path = v; }}},
      {"data.test", {[](const C& c) { return c.test_path.string(); },
                     [](C& c, const S& v) { c.test_path = v; }}},
      {"data.task", {[](const C& c) { return to_string(c.task_kind); },
                     [](C& c, const S& v) { c.task_kind = parse_task_kind(v); }}},
      {"data.num_classes", {[](const C& c) { return std::to_string(c.num_classes); },
                            [](C& c, const S& v) { c.num_classes = to_size(v); }}},

      {"model.hidden",
       {[](const C& c) {
          std::vector<S> parts;
          for (auto h : c.hidden_dims) parts.push_back(std::to_string(h));
          return join_list(parts);
        },
        [](C& c, const S& v) {
          c.hidden_dims.clear();
          for (const auto& p : split_list(v)) c.hidden_dims.push_back(to_size(p));
        }}},
      {"model.activation", {[](const C& c) { return to_string(c.activation); },
                            [](C& c, const S& v) { c.activation = parse_activation(v); }}},

      {"pretrain.epochs", {[](const C& c) { return std::to_string(c.pretrain.epochs); },
                           [](C& c, const S& v) { c.pretrain.epochs = to_size(v); }}},
      {"pretrain.batch_size", {[](const C& c) { return std::to_string(c.pretrain.batch_size); },
                               [](C& c, const S& v) { c.pretrain.batch_size = to_size(v); }}},
      {"pretrain.lr", {[](const C& c) { return csv::format_double(c.pretrain.lr); },
                       [](C& c, const S& v) { c.pretrain.lr = to_double(v); }}},
      {"pretrain.train_fraction",
       {[](const C& c) { return csv::format_double(c.pretrain.train_fraction); },
        [](C& c, const S& v) { c.pretrain.train_fraction = to_double(v); }}},

      {"meta.alpha", {[](const C& c) { return csv::format_double(c.meta.alpha); },
                      [](C& c, const S& v) { c.meta.alpha = to_double(v); }}},
      {"meta.beta", {[](const C& c) { return csv::format_double(c.meta.beta); },
                     [](C& c, const S& v) { c.meta.beta = to_double(v); }}},
      {"meta.inner_steps", {[](const C& c) { return std::to_string(c.meta.inner_steps); },
                            [](C& c, const S& v) { c.meta.inner_steps = to_size(v); }}},
      {"meta.iterations", {[](const C& c) { return std::to_string(c.meta.meta_iterations); },
                           [](C& c, const S& v) { c.meta.meta_iterations = to_size(v); }}},
      {"meta.tasks_per_batch",
       {[](const C& c) { return std::to_string(c.meta.tasks_per_meta_batch); },
        [](C& c, const S& v) { c.meta.tasks_per_meta_batch = to_size(v); }}},
      {"meta.k", {[](const C& c) { return std::to_string(c.meta.k); },
                  [](C& c, const S& v) { c.meta.k = to_size(v); }}},
      {"meta.q", {[](const C& c) { return std::to_string(c.meta.q); },
                  [](C& c, const S& v) { c.meta.q = to_size(v); }}},
      {"meta.order", {[](const C& c) { return to_string(c.meta.order); },
                      [](C& c, const S& v) { c.meta.order = parse_order(v); }}},
      {"meta.outer", {[](const C& c) { return to_string(c.meta.outer_optimizer); },
                      [](C& c, const S& v) { c.meta.outer_optimizer = parse_outer_optimizer(v); }}},
      {"meta.adam_b1", {[](const C& c) { return csv::format_double(c.meta.adam.b1); },
                        [](C& c, const S& v) { c.meta.adam.b1 = to_double(v); }}},
      {"meta.adam_b2", {[](const C& c) { return csv::format_double(c.meta.adam.b2); },
                        [](C& c, const S& v) { c.meta.adam.b2 = to_double(v); }}},
      {"meta.adam_eps", {[](const C& c) { return csv::format_double(c.meta.adam.eps); },
                         [](C& c, const S& v) { c.meta.adam.eps = to_double(v); }}},
      {"meta.runs", {[](const C& c) { return std::to_string(c.meta.num_runs); },
                     [](C& c, const S& v) { c.meta.num_runs = to_size(v); }}},

      {"plan.source", {[](const C& c) { return c.plan.source; },
                       [](C& c, const S& v) { c.plan.source = v; }}},
      {"plan.pool", {[](const C& c) { return join_list(c.plan.pool); },
                     [](C& c, const S& v) { c.plan.pool = split_list(v); }}},
      {"plan.aux", {[](const C& c) { return join_list(c.plan.auxiliary); },
                    [](C& c, const S& v) { c.plan.auxiliary = split_list(v); }}},

      {"eval.mode", {[](const C& c) { return to_string(c.mode); },
                     [](C& c, const S& v) { c.mode = parse_mode(v); }}},
      {"eval.metric", {[](const C& c) { return to_string(c.metric); },
                       [](C& c, const S& v) { c.metric = parse_metric(v); }}},
      {"eval.finetune_epochs", {[](const C& c) { return std::to_string(c.finetune.epochs); },
                                [](C& c, const S& v) { c.finetune.epochs = to_size(v); }}},
      {"eval.finetune_batch_size",
       {[](const C& c) { return std::to_string(c.finetune.batch_size); },
        [](C& c, const S& v) { c.finetune.batch_size = to_size(v); }}},
      {"eval.finetune_lr", {[](const C& c) { return csv::format_double(c.finetune.lr); },
                            [](C& c, const S& v) { c.finetune.lr = to_double(v); }}},

      {"run.seed", {[](const C& c) { return std::to_string(c.seed); },
                    [](C& c, const S& v) { c.seed = to_u64(v); }}},
      {"run.out", {[](const C& c) { return c.out_dir.string(); },
                   [](C& c, const S& v) { c.out_dir = v; }}},
  };
  return table;
}

std::uint64_t hash_prefixes(const ExperimentConfig& cfg, std::initializer_list<std::string_view> prefixes) {
  std::string text;
  for (const auto& [name, key] : keys()) {
    const bool keep = std::any_of(prefixes.begin(), prefixes.end(),
                                  [&](std::string_view p) { return name.starts_with(p); });
    if (keep) text += name + "=" + key.get(cfg) + "\n";
  }
  return fnv1a(text);
}

}  // namespace

void ExperimentConfig::propagate_seed() {
  pretrain.seed = seed;
  meta.seed = seed;
  finetune.seed = seed;
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + "=" + key.get(*this) + "\n";
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

std::uint64_t ExperimentConfig::pretrain_hash() const {
  return hash_prefixes(*this, {"data.", "model.", "pretrain.", "run.seed"});
}

std::uint64_t ExperimentConfig::meta_hash() const {
  return hash_prefixes(*this, {"data.", "model.", "pretrain.", "run.seed", "meta.", "plan."});
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("unterminated section header", line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      const auto known = keys().lower_bound(section + ".");
      if (known == keys().end() || !known->first.starts_with(section + ".")) {
        throw FormatError("unknown section [" + section + "]", line_no);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value", line_no);
    const std::string name = section + "." + trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = keys().find(name);
    if (it == keys().end()) throw FormatError("unknown setting '" + name + "'", line_no);
    try {
      it->second.set(cfg, value);
    } catch (const Error& e) {
      throw FormatError(name + ": " + e.what(), line_no);
    }
  }
  if (!base_dir.empty()) {
    for (auto* p : {&cfg.train_path, &cfg.dev_path, &cfg.test_path}) {
      if (!p->empty() && p->is_relative()) *p = base_dir / *p;
    }
  }
  cfg.propagate_seed();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  return parse_config(text, path.parent_path());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& [name, key] : keys()) {
    const auto dot = name.find('.');
    const std::string s = name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << name.substr(dot + 1) << " = " << key.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace xmaml
