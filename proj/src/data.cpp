#include "fpmt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fpmt/error.hpp"
#include "fpmt/random.hpp"

namespace fpmt {

Label label_from_class(std::size_t c) {
  if (c == 0) return Label::Negative;
  if (c == 1) return Label::Incident;
  throw ContractError("class index " + std::to_string(c) + " has no label");
}

std::size_t class_of(Label l) {
  if (l == Label::Unlabeled) throw ContractError("unlabeled sample has no class");
  return static_cast<std::size_t>(l);
}

Matrix Dataset::features() const {
  Matrix m(samples.size(), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].features.begin(), samples[i].features.end(), m.row(i).begin());
  }
  return m;
}

Matrix Dataset::one_hot() const {
  Matrix m(samples.size(), class_count);
  for (std::size_t i = 0; i < samples.size(); ++i) m(i, class_of(samples[i].label)) = 1.0;
  return m;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_count, 0);
  for (const auto& s : samples) {
    if (s.label != Label::Unlabeled) ++counts[class_of(s.label)];
  }
  return counts;
}

std::size_t Dataset::synthetic_count() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const Sample& s) { return s.synthetic; }));
}

// ---------------------------------------------------------------------------

namespace {

struct StationReading {
  double occupancy, speed, flow;
};

// Fundamental-diagram style response to a demand level in [0, 1].
StationReading station(double demand) {
  return {8.0 + 30.0 * demand, 105.0 - 55.0 * demand, 300.0 + 1500.0 * demand - 600.0 * demand * demand};
}

constexpr double kOccNoise = 3.0;
constexpr double kSpeedNoise = 5.0;
constexpr double kFlowNoise = 80.0;
constexpr double kOccRateNoise = 2.0;
constexpr double kSpeedRateNoise = 3.0;

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_normal < 1 || spec.n_incident < 1) throw ConfigError("generate_synthetic: class counts must be >= 1");
  if (spec.dim < 6) throw ConfigError("generate_synthetic: dim must be >= 6");
  if (!(spec.delta >= 0.0) || !std::isfinite(spec.delta)) throw ConfigError("generate_synthetic: delta must be >= 0");

  Rng rng = make_rng(spec.seed, 0xDA7A);
  std::uniform_real_distribution<double> demand_dist(0.15, 0.85);
  std::normal_distribution<double> unit(0.0, 1.0);

  Dataset ds;
  ds.dim = spec.dim;
  const std::size_t total = spec.n_normal + spec.n_incident;
  ds.samples.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const bool incident = i >= spec.n_normal;
    const double shift = incident ? spec.delta : 0.0;
    const double demand = demand_dist(rng);
    const double down_demand = std::clamp(demand + 0.05 * unit(rng), 0.0, 1.0);
    const StationReading up = station(demand);
    const StationReading down = station(down_demand);

    std::vector<double> f(spec.dim);
    f[0] = up.occupancy + kOccNoise * (unit(rng) + shift);
    f[1] = up.speed + kSpeedNoise * unit(rng);
    f[2] = up.flow + kFlowNoise * unit(rng);
    f[3] = down.occupancy + kOccNoise * unit(rng);
    f[4] = down.speed + kSpeedNoise * (unit(rng) - shift);
    f[5] = down.flow + kFlowNoise * (unit(rng) - shift);
    if (spec.dim > 6) f[6] = kOccRateNoise * (unit(rng) + shift);
    if (spec.dim > 7) f[7] = kSpeedRateNoise * (unit(rng) - shift);
    for (std::size_t k = 8; k < spec.dim; ++k) f[k] = unit(rng);

    ds.samples.push_back({std::move(f), incident ? Label::Incident : Label::Negative, false});
  }
  return ds;
}

// ---------------------------------------------------------------------------

std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) throw IoError("cannot format real value");
  return std::string(buf, end);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

double parse_real(std::string_view cell, std::size_t line) {
  double v = 0.0;
  const char* first = cell.data();
  if (!cell.empty() && cell.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line);
  }
  return v;
}

}  // namespace

Dataset read_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  ++lineno;
  const auto header = split_commas(line);
  std::size_t dim = 0;
  while (dim < header.size() && header[dim] == "f" + std::to_string(dim)) ++dim;
  if (dim == 0) throw ParseError("header must start with f0", lineno);
  if (dim >= header.size() || header[dim] != "label") throw ParseError("expected 'label' column after f" + std::to_string(dim - 1), lineno);
  const bool has_synth = header.size() == dim + 2;
  if (has_synth && header[dim + 1] != "synthetic") throw ParseError("unexpected column '" + std::string(header[dim + 1]) + "'", lineno);
  if (header.size() > dim + 2) throw ParseError("too many header columns", lineno);

  Dataset ds;
  ds.dim = dim;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw ParseError("ragged row: expected " + std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()), lineno);
    }
    Sample s;
    s.features.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) s.features[k] = parse_real(cells[k], lineno);
    const auto& lab = cells[dim];
    if (lab == "0") {
      s.label = Label::Negative;
    } else if (lab == "1") {
      s.label = Label::Incident;
    } else if (lab == "-1") {
      s.label = Label::Unlabeled;
    } else {
      throw ParseError("unknown label value '" + std::string(lab) + "'", lineno);
    }
    if (has_synth) {
      const auto& sy = cells[dim + 1];
      if (sy != "0" && sy != "1") throw ParseError("synthetic flag must be 0 or 1, got '" + std::string(sy) + "'", lineno);
      s.synthetic = sy == "1";
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_csv(const Dataset& ds, std::ostream& out, bool synthetic_column) {
  const bool synth = synthetic_column || ds.synthetic_count() > 0;
  for (std::size_t k = 0; k < ds.dim; ++k) out << 'f' << k << ',';
  out << "label";
  if (synth) out << ",synthetic";
  out << '\n';
  for (const auto& s : ds.samples) {
    for (double v : s.features) out << format_real(v) << ',';
    out << static_cast<int>(s.label);
    if (synth) out << ',' << (s.synthetic ? 1 : 0);
    out << '\n';
  }
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, bool synthetic_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(ds, out, synthetic_column);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

Dataset standardize(const Dataset& ds, StandardizeReport* report) {
  std::size_t real = 0;
  for (const auto& s : ds.samples) real += s.synthetic ? 0 : 1;
  if (real < 2) throw DataError("standardize needs at least 2 real samples");

  NormStats stats;
  stats.raw_dim = ds.dim;
  StandardizeReport local;
  for (std::size_t k = 0; k < ds.dim; ++k) {
    double mean = 0.0;
    for (const auto& s : ds.samples) {
      if (!s.synthetic) mean += s.features[k];
    }
    mean /= static_cast<double>(real);
    double var = 0.0;
    for (const auto& s : ds.samples) {
      if (!s.synthetic) var += (s.features[k] - mean) * (s.features[k] - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(real));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      local.dropped.push_back(k);
      local.warnings.push_back("feature f" + std::to_string(k) + " is constant; dropped");
      continue;
    }
    stats.kept.push_back(k);
    stats.mean.push_back(mean);
    stats.stddev.push_back(sd);
  }
  if (stats.kept.empty()) throw DataError("standardize: every feature is constant");
  if (report) *report = std::move(local);
  return apply_norm(ds, stats);
}

Dataset apply_norm(const Dataset& raw, const NormStats& norm) {
  if (raw.dim != norm.raw_dim) {
    throw DimensionError("normalization expects " + std::to_string(norm.raw_dim) + " features, data has " +
                         std::to_string(raw.dim));
  }
  Dataset out;
  out.dim = norm.kept.size();
  out.class_count = raw.class_count;
  out.norm = norm;
  out.samples.reserve(raw.samples.size());
  for (const auto& s : raw.samples) {
    Sample t{std::vector<double>(out.dim), s.label, s.synthetic};
    for (std::size_t j = 0; j < out.dim; ++j) {
      t.features[j] = (s.features[norm.kept[j]] - norm.mean[j]) / norm.stddev[j];
    }
    out.samples.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  if (labeled_per_class < 1 || unlabeled_per_class < 1 || test_per_class < 1) {
    throw ConfigError("split counts must all be >= 1");
  }
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.dim = ds.dim;
  out.class_count = ds.class_count;
  out.norm = ds.norm;
  out.samples.reserve(idx.size());
  for (std::size_t i : idx) out.samples.push_back(ds.samples[i]);
  return out;
}

std::vector<std::size_t> shuffled(std::vector<std::size_t> v, std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_rng(seed, stream);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

void throw_shortfalls(const std::string& what, const std::vector<std::string>& shortfalls) {
  std::string msg = "infeasible split (" + what + "):";
  for (const auto& s : shortfalls) msg += " " + s + ";";
  throw DataError(msg);
}

}  // namespace

std::pair<Dataset, Dataset> hold_out_test(const Dataset& ds, std::size_t test_per_class, std::uint64_t seed) {
  std::vector<bool> in_test(ds.size(), false);
  std::vector<std::string> shortfalls;
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    std::vector<std::size_t> real;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& s = ds.samples[i];
      if (!s.synthetic && s.label != Label::Unlabeled && class_of(s.label) == c) real.push_back(i);
    }
    if (real.size() < test_per_class) {
      shortfalls.push_back("class " + std::to_string(c) + " test needs " + std::to_string(test_per_class) +
                           " real rows, has " + std::to_string(real.size()));
      continue;
    }
    real = shuffled(std::move(real), seed, 1000 + c);
    for (std::size_t k = 0; k < test_per_class; ++k) in_test[real[k]] = true;
  }
  if (!shortfalls.empty()) throw_shortfalls("test", shortfalls);

  std::vector<std::size_t> pool_idx, test_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) (in_test[i] ? test_idx : pool_idx).push_back(i);
  Dataset test = subset(ds, test_idx);
  if (test.synthetic_count() != 0) throw ContractError("synthetic row reached the test split");
  return {subset(ds, pool_idx), std::move(test)};
}

Split split_train(const Dataset& pool, std::size_t labeled_per_class, std::size_t unlabeled_per_class,
                  std::uint64_t seed, bool clamp_unlabeled) {
  std::vector<std::size_t> labeled_idx, unlabeled_idx;
  std::vector<std::string> shortfalls;
  for (std::size_t c = 0; c < pool.class_count; ++c) {
    std::vector<std::size_t> real, synth;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& s = pool.samples[i];
      if (s.label == Label::Unlabeled || class_of(s.label) != c) continue;
      (s.synthetic ? synth : real).push_back(i);
    }
    real = shuffled(std::move(real), seed, 2000 + c);
    synth = shuffled(std::move(synth), seed, 3000 + c);
    std::vector<std::size_t> ordered = real;
    ordered.insert(ordered.end(), synth.begin(), synth.end());
    if (ordered.size() < labeled_per_class) {
      shortfalls.push_back("class " + std::to_string(c) + " labeled needs " + std::to_string(labeled_per_class) +
                           ", has " + std::to_string(ordered.size()));
      continue;
    }
    labeled_idx.insert(labeled_idx.end(), ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(labeled_per_class));
    std::vector<std::size_t> rest(ordered.begin() + static_cast<std::ptrdiff_t>(labeled_per_class), ordered.end());
    rest = shuffled(std::move(rest), seed, 4000 + c);
    std::size_t take = unlabeled_per_class;
    if (rest.size() < take) {
      if (!clamp_unlabeled) {
        shortfalls.push_back("class " + std::to_string(c) + " unlabeled needs " + std::to_string(unlabeled_per_class) +
                             ", has " + std::to_string(rest.size()));
        continue;
      }
      take = rest.size();
    }
    unlabeled_idx.insert(unlabeled_idx.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(take));
  }
  if (!shortfalls.empty()) throw_shortfalls("train", shortfalls);

  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool.samples[i].label == Label::Unlabeled) unlabeled_idx.push_back(i);
  }

  Split out;
  out.labeled = subset(pool, labeled_idx);
  out.unlabeled = subset(pool, unlabeled_idx);
  out.test = subset(pool, {});
  out.sealed_unlabeled_truth.reserve(out.unlabeled.size());
  for (auto& s : out.unlabeled.samples) {
    out.sealed_unlabeled_truth.push_back(s.label);
    s.label = Label::Unlabeled;
  }
  return out;
}

Split split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  auto [pool, test] = hold_out_test(ds, spec.test_per_class, spec.seed);
  Split out = split_train(pool, spec.labeled_per_class, spec.unlabeled_per_class, spec.seed, spec.clamp_unlabeled);
  out.test = std::move(test);
  return out;
}

}  // namespace fpmt
