#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fpmt/ablation.hpp"
#include "fpmt/error.hpp"
#include "fpmt/metrics.hpp"
#include "fpmt/random.hpp"

using namespace fpmt;

namespace {

std::vector<std::size_t> repeat(std::initializer_list<std::pair<std::size_t, std::size_t>> runs) {
  std::vector<std::size_t> out;
  for (auto [value, count] : runs) out.insert(out.end(), count, value);
  return out;
}

double binomial_tail(std::size_t wins, std::size_t n) {
  // P(X >= wins), X ~ Bin(n, 1/2), by Pascal's triangle.
  std::vector<double> row{1.0};
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> next(row.size() + 1, 0.0);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += row[j] / 2.0;
      next[j + 1] += row[j] / 2.0;
    }
    row = next;
  }
  double p = 0.0;
  for (std::size_t j = wins; j <= n; ++j) p += row[j];
  return p;
}

MetricRow row(std::string v, std::size_t labels, std::uint64_t seed, double cr, double dr, double f1) {
  return {std::move(v), labels, seed, cr, dr, f1, ""};
}

}  // namespace

TEST_CASE("metrics from a hand-counted confusion") {
  // TP=8, FN=2, FP=1, TN=89
  const auto truth = repeat({{1, 10}, {0, 90}});
  const auto pred = repeat({{1, 8}, {0, 2}, {1, 1}, {0, 89}});
  const Metrics m = compute_metrics(pred, truth);
  CHECK(m.counts == ConfusionCounts{8, 1, 89, 2});
  CHECK(m.cr == doctest::Approx(97.0));
  CHECK(m.dr == doctest::Approx(80.0));
  CHECK(m.precision == doctest::Approx(800.0 / 9.0));
  CHECK(m.f1 == doctest::Approx(2.0 * 8.0 / (2.0 * 8.0 + 1.0 + 2.0) * 100.0));
  CHECK(std::abs(m.f1 - 84.21) < 0.005);
}

TEST_CASE("all-negative predictions") {
  const auto truth = repeat({{1, 10}, {0, 90}});
  const Metrics m = compute_metrics(std::vector<std::size_t>(100, 0), truth);
  CHECK(m.cr == doctest::Approx(90.0));
  CHECK(m.dr == 0.0);
  CHECK(m.precision == 0.0);
  CHECK(m.f1 == 0.0);
}

TEST_CASE("metrics agree with a brute-force count on random pairs") {
  Rng rng = make_rng(12);
  std::bernoulli_distribution coin(0.3);
  std::vector<std::size_t> pred(10000), truth(10000);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = coin(rng);
    truth[i] = coin(rng);
  }
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    if (pred[i] == 1 && truth[i] == 0) ++fp;
    if (pred[i] == 0 && truth[i] == 0) ++tn;
    if (pred[i] == 0 && truth[i] == 1) ++fn;
  }
  const Metrics m = compute_metrics(pred, truth);
  CHECK(m.cr == doctest::Approx(100.0 * (tp + tn) / 10000.0).epsilon(1e-12));
  CHECK(m.dr == doctest::Approx(100.0 * tp / (tp + fn)).epsilon(1e-12));
  const double precision = tp / (tp + fp), recall = tp / (tp + fn);
  CHECK(m.f1 == doctest::Approx(100.0 * 2.0 * precision * recall / (precision + recall)).epsilon(1e-12));
}

TEST_CASE("metric protocol errors") {
  CHECK_THROWS_AS(compute_metrics(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 0}), ProtocolError);
  CHECK_THROWS_AS(compute_metrics(std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}), DimensionError);
}

TEST_CASE("sign test p-values match the binomial tail") {
  CHECK(sign_test_p_value(5, 0) == doctest::Approx(1.0 / 32.0));
  CHECK(sign_test_p_value(7, 1) == doctest::Approx(9.0 / 256.0));
  CHECK(sign_test_p_value(0, 0) == 1.0);
  for (std::size_t n = 1; n <= 20; ++n) {
    for (std::size_t w = 0; w <= n; ++w) {
      CHECK(sign_test_p_value(w, n - w) == doctest::Approx(binomial_tail(w, n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("aggregate: mean and sample standard deviation per cell") {
  const std::vector<MetricRow> rows{row("MT", 50, 1, 80, 70, 75), row("MT", 50, 2, 90, 80, 85),
                                    row("MT", 50, 3, 85, 75, 80), row("PMT", 50, 1, 88, 77, 81)};
  MetricRow failed = row("PMT", 50, 2, 0, 0, 0);
  failed.error = "boom";
  std::vector<MetricRow> with_failure = rows;
  with_failure.push_back(failed);
  const auto cells = aggregate(with_failure, {"MT", "PMT", "FPMT"}, {50});
  REQUIRE(cells.size() == 3);
  CHECK(cells[0].n == 3);
  CHECK(cells[0].cr_mean == doctest::Approx(85.0));
  CHECK(cells[0].cr_sd == doctest::Approx(5.0));
  CHECK(cells[0].f1_mean == doctest::Approx(80.0));
  CHECK(cells[1].n == 1);
  CHECK(cells[1].dr_mean == doctest::Approx(77.0));
  CHECK(cells[2].n == 0);
  CHECK(format_cell(cells[0]) == "85.0/75.0/80.0");
  CHECK(format_cell(cells[2]) == "—");
}

TEST_CASE("long CSV round trip and deterministic markdown") {
  AblationTable t;
  t.variants = {"MT", "FPMT"};
  t.labels = {50, 100};
  for (const std::string v : {"MT", "FPMT"}) {
    for (std::size_t l : {50, 100}) {
      for (std::uint64_t s = 1; s <= 2; ++s) {
        t.rows.push_back(row(v, l, s, 80.0 + s + l / 100.0, 70.0 + 1.0 / 3.0, 75.123456789));
      }
    }
  }
  t.rows[3].error = "DataError: short; \"quoted\"";  // run_ablation strips commas
  t.cells = aggregate(t.rows, t.variants, t.labels);

  std::ostringstream csv;
  write_long_csv(t, csv);
  CHECK(csv.str().rfind("variant,labels_per_class,seed,CR,DR,F1,error\n", 0) == 0);
  std::istringstream in(csv.str());
  const AblationTable back = read_long_csv(in);
  CHECK(back.rows == t.rows);
  CHECK(back.variants == t.variants);
  CHECK(back.labels == t.labels);
  CHECK_FALSE(back.all_ok());

  std::ostringstream md1, md2;
  write_markdown(t, md1);
  write_markdown(back, md2);
  CHECK(md1.str() == md2.str());
  CHECK(md1.str().find("| Variant | 50 labels/class | 100 labels/class |") != std::string::npos);
  CHECK(md1.str().find(format_cell(t.cell("FPMT", 100))) != std::string::npos);

  std::ostringstream agg;
  write_aggregate_csv(t, agg);
  CHECK(agg.str().rfind("variant,labels_per_class,n,", 0) == 0);
}

TEST_CASE("emit_report") {
  const auto dir = std::filesystem::temp_directory_path() / "fpmt_emit_test";
  std::filesystem::create_directories(dir);
  AblationTable empty;
  CHECK_THROWS_AS(emit_report(empty, dir / "x.md", ReportFormat::Markdown), ContractError);
  AblationTable t;
  t.variants = {"MT"};
  t.labels = {50};
  t.rows = {row("MT", 50, 1, 90, 80, 85)};
  t.cells = aggregate(t.rows, t.variants, t.labels);
  CHECK_THROWS_AS(emit_report(t, dir / "missing" / "x.csv", ReportFormat::Csv), IoError);
  emit_report(t, dir / "x.csv", ReportFormat::Csv);
  CHECK(std::filesystem::file_size(dir / "x.csv") > 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid parsing") {
  std::istringstream in(
      "variants = baseline, MT, FPMT\n"
      "labels = 50, 100\n"
      "seeds = 2-4\n"
      "incident = 900   # smaller minority\n"
      "stage3_epochs = 5\n");
  AblationGrid g;
  read_grid(in, g);
  CHECK(g.include_baseline);
  CHECK(g.variants == std::vector<Variant>{Variant::MT, Variant::FPMT});
  CHECK(g.labels == std::vector<std::size_t>{50, 100});
  CHECK(g.seeds == std::vector<std::uint64_t>{2, 3, 4});
  CHECK(g.synthetic.n_incident == 900);
  CHECK(g.base.stage3_epochs == 5);

  std::istringstream list("seeds = 1,5,9\n");
  read_grid(list, g);
  CHECK(g.seeds == std::vector<std::uint64_t>{1, 5, 9});

  std::istringstream bad("labels = 50\nvariants = MT, TMix\n");
  try {
    read_grid(bad, g);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream no_eq("labels 50\n");
  CHECK_THROWS_AS(read_grid(no_eq, g), ParseError);
}

TEST_CASE("run_ablation: one row per cell and seed") {
  AblationGrid g;
  g.labels = {10};
  g.seeds = {1, 2, 3, 4, 5};
  g.synthetic.n_normal = 200;
  g.synthetic.n_incident = 150;
  PipelineConfig& c = g.base;
  c.stage1_epochs = c.stage2_epochs = c.stage3_epochs = 1;
  c.depth = 2;
  c.width = 4;
  c.batch_size = 16;
  c.unlabeled_per_class = 40;
  c.test_per_class = 30;
  c.gan.steps = 20;
  c.gan.batch = 16;

  std::size_t callbacks = 0;
  const AblationTable t = run_ablation(g, [&](const MetricRow&) { ++callbacks; });
  CHECK(callbacks == 15);
  CHECK(t.rows.size() == 15);
  CHECK(t.cells.size() == 3);
  CHECK(t.all_ok());
  for (const auto& cell : t.cells) CHECK(cell.n == 5);
  CHECK(t.rows.front().variant == "MT");
  CHECK(t.rows.back().variant == "FPMT");

  SUBCASE("a failing cell is recorded and the rest still run") {
    g.labels = {10, 500};
    const AblationTable partial = run_ablation(g);
    CHECK(partial.rows.size() == 30);
    CHECK_FALSE(partial.all_ok());
    CHECK(partial.cell("MT", 10).n == 5);
    CHECK(partial.cell("MT", 500).n == 0);
    CHECK(format_cell(partial.cell("MT", 500)) == "—");
  }
}
