#include "xmaml/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "xmaml/csv.hpp"
#include "xmaml/errors.hpp"

namespace xmaml {

Corpus::Corpus(std::size_t input_dim, TaskKind kind, std::size_t num_classes)
    : input_dim_(input_dim), kind_(kind), num_classes_(num_classes) {
  if (kind_ == TaskKind::classification && num_classes_ < 2) {
    throw ArgumentError("classification corpus needs at least 2 classes");
  }
}

void Corpus::add(Record record) {
  if (record.features.size() != input_dim_) {
    throw StructureError("record has " + std::to_string(record.features.size()) +
                         " features, corpus expects " + std::to_string(input_dim_));
  }
  if (kind_ == TaskKind::classification) {
    const double y = record.label;
    if (y != std::floor(y) || y < 0.0 || y >= static_cast<double>(num_classes_)) {
      throw LabelError("label " + csv::format_double(y) + " outside [0, " +
                       std::to_string(num_classes_) + ")");
    }
  }
  auto [it, inserted] = index_.try_emplace(record.group);
  if (inserted) group_order_.push_back(record.group);
  it->second.push_back(records_.size());
  records_.push_back(std::move(record));
}

bool Corpus::has_group(const std::string& group) const { return index_.count(group) != 0; }

const std::vector<std::size_t>& Corpus::indices(const std::string& group) const {
  const auto it = index_.find(group);
  if (it == index_.end()) throw UnknownGroupError(group);
  return it->second;
}

Batch Corpus::batch(std::span<const std::size_t> rows) const {
  std::vector<double> x;
  x.reserve(rows.size() * input_dim_);
  std::vector<double> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) {
    const Record& rec = records_.at(r);
    x.insert(x.end(), rec.features.begin(), rec.features.end());
    y.push_back(rec.label);
  }
  return Batch{Tensor({rows.size(), input_dim_}, std::move(x)), std::move(y)};
}

Batch Corpus::group_batch(const std::string& group) const { return batch(indices(group)); }

Corpus Corpus::restrict_to(std::span<const std::string> groups) const {
  const std::set<std::string> keep(groups.begin(), groups.end());
  for (const auto& g : keep) {
    if (!has_group(g)) throw UnknownGroupError(g);
  }
  Corpus out(input_dim_, kind_, num_classes_);
  for (const Record& r : records_) {
    if (keep.count(r.group)) out.add(r);
  }
  return out;
}

Corpus Corpus::restrict_to(const std::string& group) const {
  const std::string groups[] = {group};
  return restrict_to(groups);
}

Corpus load_corpus(const std::filesystem::path& path, TaskKind kind, std::size_t num_classes) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw FormatError("missing header in '" + path.string() + "'", 1);
  const auto header = csv::split(lines[0]);
  if (header.size() < 3 || header[0] != "group" || header[1] != "label") {
    throw FormatError("header must be group,label,f0,...", 1);
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 2] != "f" + std::to_string(j)) {
      throw FormatError("feature column " + std::to_string(j) + " must be named f" +
                            std::to_string(j),
                        1);
    }
  }
  std::vector<Record> records;
  double max_label = 0.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = csv::split(lines[i]);
    if (fields.size() != header.size()) {
      throw FormatError("expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);
    }
    if (fields[0].empty()) throw FormatError("empty group id", line_no);
    Record rec;
    rec.group = fields[0];
    if (kind == TaskKind::classification) {
      long long label = 0;
      if (!csv::parse_int(fields[1], label) || label < 0) {
        throw FormatError("label '" + fields[1] + "' is not a class id", line_no);
      }
      rec.label = static_cast<double>(label);
    } else if (!csv::parse_double(fields[1], rec.label)) {
      throw FormatError("label '" + fields[1] + "' is not a number", line_no);
    }
    rec.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (!csv::parse_double(fields[j + 2], rec.features[j])) {
        throw FormatError("feature f" + std::to_string(j) + " '" + fields[j + 2] +
                              "' is not a number",
                          line_no);
      }
    }
    max_label = std::max(max_label, rec.label);
    records.push_back(std::move(rec));
  }
  if (kind == TaskKind::classification && num_classes == 0) {
    num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  }
  Corpus corpus(d, kind, kind == TaskKind::classification ? num_classes : 0);
  for (auto& r : records) corpus.add(std::move(r));
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "group,label";
  for (std::size_t j = 0; j < corpus.input_dim(); ++j) out << ",f" << j;
  out << '\n';
  for (const Record& r : corpus.records()) {
    out << r.group << ',';
    if (corpus.kind() == TaskKind::classification) {
      out << static_cast<long long>(r.label);
    } else {
      out << csv::format_double(r.label);
    }
    for (double v : r.features) out << ',' << csv::format_double(v);
    out << '\n';
  }
  csv::write_file(path, out.str());
}

std::size_t subsample_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError("fraction must be in (0, 1], got " + csv::format_double(fraction));
  }
  // Guards products such as 0.07 * 100 = 7.000000000000001.
  const double exact = fraction * static_cast<double>(n);
  const double rounded = std::round(exact);
  const double target = std::abs(exact - rounded) < 1e-9 ? rounded : std::ceil(exact);
  return std::min(n, static_cast<std::size_t>(target));
}

Corpus subsample_fraction(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (corpus.empty()) throw EmptyCorpusError("cannot subsample an empty corpus");
  const std::size_t target = subsample_size(corpus.size(), fraction);

  // Strata: (group, class) for classifiers, group otherwise; first-seen order.
  std::vector<std::vector<std::size_t>> strata;
  std::map<std::pair<std::string, long long>, std::size_t> stratum_of;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Record& r = corpus.records()[i];
    const long long cls = corpus.kind() == TaskKind::classification
                              ? static_cast<long long>(r.label)
                              : 0;
    auto [it, inserted] = stratum_of.try_emplace({r.group, cls}, strata.size());
    if (inserted) strata.emplace_back();
    strata[it->second].push_back(i);
  }

  // Largest-remainder apportionment; remainder ties broken by a seeded draw.
  Rng rng(derive_seed(seed, "subsample_fraction"));
  std::vector<std::size_t> quota(strata.size());
  std::vector<std::pair<double, double>> priority(strata.size());
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const double exact = fraction * static_cast<double>(strata[s].size());
    const double rounded = std::round(exact);
    const double q = std::abs(exact - rounded) < 1e-9 ? rounded : exact;
    quota[s] = static_cast<std::size_t>(std::floor(q));
    priority[s] = {q - std::floor(q), rng.uniform()};
    assigned += quota[s];
  }
  std::vector<std::size_t> order(strata.size());
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return priority[a] > priority[b];
  });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    const std::size_t s = order[i];
    if (quota[s] < strata[s].size()) {
      ++quota[s];
      ++assigned;
    }
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(target);
  for (std::size_t s = 0; s < strata.size(); ++s) {
    for (std::size_t pick : rng.sample_without_replacement(strata[s].size(), quota[s])) {
      chosen.push_back(strata[s][pick]);
    }
  }
  std::sort(chosen.begin(), chosen.end());

  Corpus out(corpus.input_dim(), corpus.kind(), corpus.num_classes());
  for (std::size_t i : chosen) out.add(corpus.records()[i]);
  return out;
}

Episode sample_episode(const Corpus& corpus, const std::string& group, std::size_t k,
                       std::size_t q, Rng& rng) {
  if (k == 0 || q == 0) throw ArgumentError("K and Q must be >= 1");
  const auto& rows = corpus.indices(group);
  if (rows.size() < k + q) throw InsufficientDataError(group, k + q, rows.size());
  const auto picks = rng.sample_without_replacement(rows.size(), k + q);
  Episode ep;
  ep.group = group;
  for (std::size_t i = 0; i < k + q; ++i) {
    (i < k ? ep.support_rows : ep.query_rows).push_back(rows[picks[i]]);
  }
  ep.support = corpus.batch(ep.support_rows);
  ep.query = corpus.batch(ep.query_rows);
  return ep;
}

std::vector<std::string> LanguagePlan::targets() const {
  std::vector<std::string> out;
  for (const auto& g : pool) {
    if (std::find(auxiliary.begin(), auxiliary.end(), g) == auxiliary.end()) out.push_back(g);
  }
  return out;
}

void LanguagePlan::validate(bool require_auxiliary) const {
  if (std::find(pool.begin(), pool.end(), source) != pool.end()) {
    throw ArgumentError("source '" + source + "' must not be in the pool");
  }
  for (const auto& a : auxiliary) {
    if (std::find(pool.begin(), pool.end(), a) == pool.end()) {
      throw ArgumentError("auxiliary '" + a + "' is not in the pool");
    }
  }
  if (require_auxiliary && auxiliary.empty()) {
    throw ArgumentError("meta-learning needs at least one auxiliary group");
  }
}

LanguagePlan LanguagePlan::canonical() const {
  LanguagePlan out = *this;
  std::sort(out.auxiliary.begin(), out.auxiliary.end());
  out.auxiliary.erase(std::unique(out.auxiliary.begin(), out.auxiliary.end()),
                      out.auxiliary.end());
  return out;
}

double SinusoidTask::operator()(double x) const { return amplitude * std::sin(x + phase); }

SinusoidTask draw_sinusoid_task(Rng& rng) {
  SinusoidTask t;
  t.amplitude = rng.uniform(0.1, 5.0);
  t.phase = rng.uniform(0.0, std::numbers::pi);
  return t;
}

Batch sample_sinusoid_points(const SinusoidTask& task, Rng& rng, std::size_t n) {
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform(-5.0, 5.0);
    y[i] = task(x[i]);
  }
  return Batch{Tensor({n, 1}, std::move(x)), std::move(y)};
}

Episode gen_sinusoid_episode(Rng& rng, std::size_t k, std::size_t q, SinusoidTask* drawn) {
  if (k == 0 || q == 0) throw ArgumentError("K and Q must be >= 1");
  const SinusoidTask task = draw_sinusoid_task(rng);
  if (drawn) *drawn = task;
  Episode ep;
  ep.group = "sinusoid";
  ep.support = sample_sinusoid_points(task, rng, k);
  ep.query = sample_sinusoid_points(task, rng, q);
  return ep;
}

void SyntheticFamilySpec::validate() const {
  if (num_languages == 0) throw ArgumentError("family needs at least one language");
  if (feature_bits.size() != num_languages) {
    throw ArgumentError("feature_bits must list one vector per language");
  }
  const std::size_t bits = feature_bits.front().size();
  for (const auto& fb : feature_bits) {
    if (fb.size() != bits) throw ArgumentError("feature_bits lengths differ across languages");
    for (int b : fb) {
      if (b != 0 && b != 1) throw ArgumentError("feature bits must be 0 or 1");
    }
  }
  if (bits + 1 > input_dim) {
    throw ArgumentError("input_dim must exceed the number of feature bits");
  }
  if (!names.empty() && names.size() != num_languages) {
    throw ArgumentError("names must list one id per language");
  }
  if (noise_std < 0.0) throw ArgumentError("noise_std must be >= 0");
}

std::string SyntheticFamilySpec::name(std::size_t language) const {
  return names.empty() ? "L" + std::to_string(language) : names[language];
}

std::vector<std::vector<double>> family_boundaries(const SyntheticFamilySpec& spec) {
  spec.validate();
  const std::size_t d = spec.input_dim;
  const std::size_t bits = spec.feature_bits.front().size();

  // Orthonormal directions: e0 is the shared boundary, e1.. one per bit.
  Rng rng(derive_seed(spec.base_seed, "family_boundaries"));
  std::vector<std::vector<double>> basis;
  while (basis.size() < bits + 1) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    for (const auto& e : basis) {
      double proj = 0.0;
      for (std::size_t j = 0; j < d; ++j) proj += v[j] * e[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= proj * e[j];
    }
    double len = 0.0;
    for (double x : v) len += x * x;
    len = std::sqrt(len);
    if (len < 1e-6) continue;
    for (double& x : v) x /= len;
    basis.push_back(std::move(v));
  }

  std::vector<std::vector<double>> out;
  for (const auto& fb : spec.feature_bits) {
    std::vector<double> w = basis[0];
    for (std::size_t b = 0; b < bits; ++b) {
      if (!fb[b]) continue;
      for (std::size_t j = 0; j < d; ++j) w[j] += spec.bit_scale * basis[b + 1][j];
    }
    out.push_back(std::move(w));
  }
  return out;
}

Corpus gen_synthetic_family(const SyntheticFamilySpec& spec) {
  const auto boundaries = family_boundaries(spec);
  const std::size_t d = spec.input_dim;
  Corpus corpus(d, TaskKind::classification, 2);
  Rng rng(derive_seed(spec.sample_seed.value_or(spec.base_seed), "family_samples"));
  for (std::size_t l = 0; l < spec.num_languages; ++l) {
    for (std::size_t i = 0; i < spec.samples_per_language; ++i) {
      Record r;
      r.group = spec.name(l);
      r.features.resize(d);
      double margin = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = rng.normal();
        margin += boundaries[l][j] * x;
        r.features[j] = x + spec.noise_std * rng.normal();
      }
      r.label = margin > 0.0 ? 1.0 : 0.0;
      corpus.add(std::move(r));
    }
  }
  return corpus;
}

}  // namespace xmaml
