#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fpmt/matrix.hpp"

namespace fpmt {

enum class Label : int { Negative = 0, Incident = 1, Unlabeled = -1 };

Label label_from_class(std::size_t c);
// Class index of a labeled sample; Unlabeled raises ContractError.
std::size_t class_of(Label l);

struct Sample {
  std::vector<double> features;
  Label label = Label::Unlabeled;
  bool synthetic = false;

  bool operator==(const Sample&) const = default;
};

// Per-feature standardization fitted on real rows. `kept` lists the raw
// feature indices that survive (constant features are dropped).
struct NormStats {
  std::size_t raw_dim = 0;
  std::vector<std::size_t> kept;
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return kept.empty(); }
  bool operator==(const NormStats&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;
  std::size_t class_count = 2;
  NormStats norm;

  std::size_t size() const { return samples.size(); }
  Matrix features() const;
  // One-hot rows for labeled samples; Unlabeled rows raise ContractError.
  Matrix one_hot() const;
  std::vector<std::size_t> class_counts() const;
  std::size_t synthetic_count() const;

  // Row content and dimension; normalization stats are not compared.
  bool operator==(const Dataset& other) const { return dim == other.dim && samples == other.samples; }
};

// ---------------------------------------------------------------------------
// Synthetic detector data: two stations (upstream, downstream) reporting
// occupancy, speed and flow over a detection window, plus the temporal change
// of upstream occupancy and downstream speed. A shared demand level drives
// both stations; incidents raise upstream occupancy and depress downstream
// speed and flow by `delta` noise standard deviations. At 1.15 a logistic
// probe scores about 90% on balanced data.

inline constexpr double kDefaultDelta = 1.15;

struct SyntheticSpec {
  std::size_t n_normal = 1000;
  std::size_t n_incident = 100;
  std::size_t dim = 8;
  double delta = kDefaultDelta;
  std::uint64_t seed = 1;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// CSV: header f0..f{d-1},label[,synthetic]; label -1 encodes Unlabeled.

Dataset read_csv(std::istream& in);
void write_csv(const Dataset& ds, std::ostream& out, bool synthetic_column = false);
Dataset load_csv(const std::filesystem::path& path);
// The synthetic column is written when requested or when any row is synthetic.
void save_csv(const Dataset& ds, const std::filesystem::path& path, bool synthetic_column = false);

// Shortest text that parses back to the same double (17 significant digits).
std::string format_real(double v);

// ---------------------------------------------------------------------------

struct StandardizeReport {
  std::vector<std::size_t> dropped;
  std::vector<std::string> warnings;
};

// Fits mean/std over the real (non-synthetic) rows and applies them to all rows.
Dataset standardize(const Dataset& ds, StandardizeReport* report = nullptr);
// Applies previously fitted stats to raw data with norm.raw_dim features.
Dataset apply_norm(const Dataset& raw, const NormStats& norm);

struct SplitSpec {
  std::size_t labeled_per_class = 50;
  std::size_t unlabeled_per_class = 5000;
  std::size_t test_per_class = 500;
  std::uint64_t seed = 1;
  // Take min(unlabeled_per_class, available) instead of failing.
  bool clamp_unlabeled = false;

  void validate() const;
};

struct Split {
  Dataset labeled;
  Dataset unlabeled;
  Dataset test;
  // True labels of `unlabeled`, row-aligned. For evaluation diagnostics only.
  std::vector<Label> sealed_unlabeled_truth;
};

// Stratified split: test rows come only from real rows; labeled rows prefer
// real rows; everything else of the class may become unlabeled. Rows that
// arrive already Unlabeled are appended to the unlabeled pool.
Split split(const Dataset& ds, const SplitSpec& spec);

// First half of split(): (remaining pool, test).
std::pair<Dataset, Dataset> hold_out_test(const Dataset& ds, std::size_t test_per_class, std::uint64_t seed);
// Second half of split(): labeled and unlabeled pools from `pool`.
Split split_train(const Dataset& pool, std::size_t labeled_per_class, std::size_t unlabeled_per_class,
                  std::uint64_t seed, bool clamp_unlabeled = false);

}  // namespace fpmt
