#include "fpmt/ablation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "fpmt/error.hpp"

namespace fpmt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T out{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(what + ": cannot parse '" + s + "'");
  }
  return out;
}

// "1,2,3" or "1-5"
std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = parse_number<std::uint64_t>(trim(item.substr(0, dash)), "seeds");
      const auto hi = parse_number<std::uint64_t>(trim(item.substr(dash + 1)), "seeds");
      if (hi < lo) throw ConfigError("seeds: empty range '" + item + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else {
      out.push_back(parse_number<std::uint64_t>(item, "seeds"));
    }
  }
  return out;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
  mean = sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

constexpr const char* kBaseline = "baseline";

}  // namespace

bool AblationTable::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const MetricRow& r) { return r.ok(); });
}

const AggregateCell& AblationTable::cell(const std::string& variant, std::size_t labels_per_class) const {
  for (const auto& c : cells) {
    if (c.variant == variant && c.labels_per_class == labels_per_class) return c;
  }
  throw ContractError("ablation: no cell " + variant + "@" + std::to_string(labels_per_class));
}

void read_grid(std::istream& in, AblationGrid& grid) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "variants") {
        grid.variants.clear();
        grid.include_baseline = false;
        for (const auto& v : split_list(value, ',')) {
          if (v == kBaseline) {
            grid.include_baseline = true;
          } else {
            grid.variants.push_back(parse_variant(v));
          }
        }
      } else if (key == "labels") {
        grid.labels.clear();
        for (const auto& v : split_list(value, ',')) grid.labels.push_back(parse_number<std::size_t>(v, key));
      } else if (key == "seeds") {
        grid.seeds = parse_seeds(value);
      } else if (key == "baseline") {
        grid.include_baseline = value == "true" || value == "1";
      } else if (key == "data") {
        grid.data = value;
      } else if (key == "normal") {
        grid.synthetic.n_normal = parse_number<std::size_t>(value, key);
      } else if (key == "incident") {
        grid.synthetic.n_incident = parse_number<std::size_t>(value, key);
      } else if (key == "delta") {
        grid.synthetic.delta = parse_number<double>(value, key);
      } else if (key == "dim") {
        grid.synthetic.dim = parse_number<std::size_t>(value, key);
      } else {
        grid.base.set(key, value);
      }
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

AblationGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  AblationGrid grid;
  read_grid(in, grid);
  if (grid.data && grid.data->is_relative()) grid.data = path.parent_path() / *grid.data;
  return grid;
}

AblationTable run_ablation(const AblationGrid& grid, const CellCallback& on_cell) {
  if ((grid.variants.empty() && !grid.include_baseline) || grid.labels.empty() || grid.seeds.empty()) {
    throw ConfigError("ablation: grid is empty");
  }
  AblationTable table;
  if (grid.include_baseline) table.variants.push_back(kBaseline);
  for (Variant v : grid.variants) table.variants.push_back(to_string(v));
  table.labels = grid.labels;

  std::optional<Dataset> shared;
  if (grid.data) shared = load_csv(*grid.data);

  for (std::uint64_t seed : grid.seeds) {
    Dataset data;
    if (shared) {
      data = *shared;
    } else {
      SyntheticSpec spec = grid.synthetic;
      spec.seed = seed;
      data = generate_synthetic(spec);
    }
    for (const auto& name : table.variants) {
      for (std::size_t labels : grid.labels) {
        MetricRow row{name, labels, seed, 0.0, 0.0, 0.0, {}};
        try {
          PipelineConfig config = grid.base;
          if (name == kBaseline) {
            config.supervised_only = true;
            config.gan_enabled = false;
          } else {
            config.apply_variant(parse_variant(name));
          }
          config.labels_per_class = labels;
          config.seed = seed;
          const RunResult result = run_fpmt(data, config);
          row.cr = result.metrics.cr;
          row.dr = result.metrics.dr;
          row.f1 = result.metrics.f1;
        } catch (const std::exception& e) {
          row.error = sanitize(e.what());
          if (row.error.empty()) row.error = "unknown error";
        }
        if (on_cell) on_cell(row);
        table.rows.push_back(std::move(row));
      }
    }
  }
  // Rows are written variant-major so the long CSV reads like the table.
  std::stable_sort(table.rows.begin(), table.rows.end(), [&](const MetricRow& a, const MetricRow& b) {
    const auto va = std::find(table.variants.begin(), table.variants.end(), a.variant);
    const auto vb = std::find(table.variants.begin(), table.variants.end(), b.variant);
    if (va != vb) return va < vb;
    const auto la = std::find(table.labels.begin(), table.labels.end(), a.labels_per_class);
    const auto lb = std::find(table.labels.begin(), table.labels.end(), b.labels_per_class);
    return la < lb;
  });
  table.cells = aggregate(table.rows, table.variants, table.labels);
  return table;
}

std::vector<AggregateCell> aggregate(const std::vector<MetricRow>& rows, const std::vector<std::string>& variants,
                                     const std::vector<std::size_t>& labels) {
  std::vector<AggregateCell> cells;
  for (const auto& v : variants) {
    for (std::size_t l : labels) {
      std::vector<double> cr, dr, f1;
      for (const auto& r : rows) {
        if (r.variant != v || r.labels_per_class != l || !r.ok()) continue;
        cr.push_back(r.cr);
        dr.push_back(r.dr);
        f1.push_back(r.f1);
      }
      AggregateCell c;
      c.variant = v;
      c.labels_per_class = l;
      c.n = cr.size();
      mean_sd(cr, c.cr_mean, c.cr_sd);
      mean_sd(dr, c.dr_mean, c.dr_sd);
      mean_sd(f1, c.f1_mean, c.f1_sd);
      cells.push_back(c);
    }
  }
  return cells;
}

std::string format_cell(const AggregateCell& cell) {
  if (cell.n == 0) return "—";
  return fixed1(cell.cr_mean) + "/" + fixed1(cell.dr_mean) + "/" + fixed1(cell.f1_mean);
}

void write_long_csv(const AblationTable& table, std::ostream& out) {
  out << "variant,labels_per_class,seed,CR,DR,F1,error\n";
  for (const auto& r : table.rows) {
    out << r.variant << ',' << r.labels_per_class << ',' << r.seed << ',' << format_real(r.cr) << ','
        << format_real(r.dr) << ',' << format_real(r.f1) << ',' << sanitize(r.error) << '\n';
  }
}

void write_aggregate_csv(const AblationTable& table, std::ostream& out) {
  out << "variant,labels_per_class,n,CR_mean,DR_mean,F1_mean,CR_sd,DR_sd,F1_sd\n";
  for (const auto& c : table.cells) {
    out << c.variant << ',' << c.labels_per_class << ',' << c.n << ',' << format_real(c.cr_mean) << ','
        << format_real(c.dr_mean) << ',' << format_real(c.f1_mean) << ',' << format_real(c.cr_sd) << ','
        << format_real(c.dr_sd) << ',' << format_real(c.f1_sd) << '\n';
  }
}

void write_markdown(const AblationTable& table, std::ostream& out) {
  out << "| Variant |";
  for (std::size_t l : table.labels) out << ' ' << l << " labels/class |";
  out << "\n|---|";
  for (std::size_t i = 0; i < table.labels.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& v : table.variants) {
    out << "| " << v << " |";
    for (std::size_t l : table.labels) out << ' ' << format_cell(table.cell(v, l)) << " |";
    out << '\n';
  }
  out << "\nCells: CR/DR/F1 (%), mean over seeds.\n";
}

void emit_report(const AblationTable& table, const std::filesystem::path& path, ReportFormat format) {
  if (table.rows.empty()) throw ContractError("emit_report: table is empty");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (format == ReportFormat::Csv) {
    write_long_csv(table, out);
  } else {
    write_markdown(table, out);
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

AblationTable read_long_csv(std::istream& in) {
  AblationTable table;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++lineno;
  if (trim(line) != "variant,labels_per_class,seed,CR,DR,F1,error") throw ParseError("unexpected header", lineno);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string item;
    std::istringstream cells(line);
    while (std::getline(cells, item, ',')) f.push_back(item);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw ParseError("expected 7 fields, got " + std::to_string(f.size()), lineno);
    MetricRow r;
    try {
      r.variant = f[0];
      r.labels_per_class = parse_number<std::size_t>(f[1], "labels_per_class");
      r.seed = parse_number<std::uint64_t>(f[2], "seed");
      r.cr = parse_number<double>(f[3], "CR");
      r.dr = parse_number<double>(f[4], "DR");
      r.f1 = parse_number<double>(f[5], "F1");
      r.error = f[6];
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (std::find(table.variants.begin(), table.variants.end(), r.variant) == table.variants.end()) {
      table.variants.push_back(r.variant);
    }
    if (std::find(table.labels.begin(), table.labels.end(), r.labels_per_class) == table.labels.end()) {
      table.labels.push_back(r.labels_per_class);
    }
    table.rows.push_back(std::move(r));
  }
  table.cells = aggregate(table.rows, table.variants, table.labels);
  return table;
}

}  // namespace fpmt
