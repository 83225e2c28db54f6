#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fpmt/data.hpp"
#include "fpmt/pipeline.hpp"

namespace fpmt {

struct MetricRow {
  std::string variant;  // "MT", "PMT", "FPMT" or "baseline"
  std::size_t labels_per_class = 0;
  std::uint64_t seed = 0;
  double cr = 0.0, dr = 0.0, f1 = 0.0;
  std::string error;  // non-empty when the cell failed

  bool ok() const { return error.empty(); }
  bool operator==(const MetricRow&) const = default;
};

struct AggregateCell {
  std::string variant;
  std::size_t labels_per_class = 0;
  std::size_t n = 0;  // successful seeds
  double cr_mean = 0.0, dr_mean = 0.0, f1_mean = 0.0;
  double cr_sd = 0.0, dr_sd = 0.0, f1_sd = 0.0;
};

struct AblationTable {
  std::vector<std::string> variants;
  std::vector<std::size_t> labels;
  std::vector<MetricRow> rows;
  std::vector<AggregateCell> cells;  // variant-major, same order as variants × labels

  bool all_ok() const;
  const AggregateCell& cell(const std::string& variant, std::size_t labels_per_class) const;
};

struct AblationGrid {
  std::vector<Variant> variants{Variant::MT, Variant::PMT, Variant::FPMT};
  std::vector<std::size_t> labels{50, 100, 1500};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool include_baseline = false;  // adds a supervised-only row
  PipelineConfig base;
  // Either a CSV file shared by all cells, or a generator whose seed is set to
  // the cell seed so variants see the same data for a given seed.
  std::optional<std::filesystem::path> data;
  SyntheticSpec synthetic;
};

void read_grid(std::istream& in, AblationGrid& grid);
AblationGrid load_grid(const std::filesystem::path& path);

using CellCallback = std::function<void(const MetricRow&)>;

// Runs every cell. A failing cell is recorded with its error and the run
// continues.
AblationTable run_ablation(const AblationGrid& grid, const CellCallback& on_cell = {});

std::vector<AggregateCell> aggregate(const std::vector<MetricRow>& rows, const std::vector<std::string>& variants,
                                     const std::vector<std::size_t>& labels);

// "93.7/86.3/91.7", or "—" when no seed of the cell succeeded.
std::string format_cell(const AggregateCell& cell);

enum class ReportFormat { Csv, Markdown };

void write_long_csv(const AblationTable& table, std::ostream& out);
void write_aggregate_csv(const AblationTable& table, std::ostream& out);
void write_markdown(const AblationTable& table, std::ostream& out);
// Csv writes the long format; Markdown writes the variants × labels table.
void emit_report(const AblationTable& table, const std::filesystem::path& path, ReportFormat format);

// Parses write_long_csv output and rebuilds the aggregate cells.
AblationTable read_long_csv(std::istream& in);

}  // namespace fpmt
