#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fpmt/ablation.hpp"
#include "fpmt/checkpoint.hpp"
#include "fpmt/error.hpp"
#include "fpmt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fpmt;

namespace {

void print_metrics(const Metrics& m) {
  std::printf("CR=%.2f DR=%.2f F1=%.2f (TP=%zu FP=%zu TN=%zu FN=%zu)\n", m.cr, m.dr, m.f1, m.counts.tp, m.counts.fp,
              m.counts.tn, m.counts.fn);
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  body(out);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised incident detection with GAN balancing and pseudo-mixup"};
  app.require_subcommand(1);

  SyntheticSpec gen_spec;
  fs::path gen_out;
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic detector dataset");
  gen->add_option("--normal", gen_spec.n_normal, "Normal rows")->required();
  gen->add_option("--incident", gen_spec.n_incident, "Incident rows")->required();
  gen->add_option("--delta", gen_spec.delta, "Incident shift in noise standard deviations");
  gen->add_option("--dim", gen_spec.dim, "Feature count (>= 8)");
  gen->add_option("--seed", gen_spec.seed);
  gen->add_option("--out", gen_out)->required();

  fs::path aug_in, aug_out;
  std::size_t aug_target = 0;
  GanConfig aug_gan;
  auto* aug = app.add_subcommand("augment", "Balance classes to T rows each with per-class GANs");
  aug->add_option("--in", aug_in)->required()->check(CLI::ExistingFile);
  aug->add_option("--out", aug_out)->required();
  aug->add_option("--target-per-class", aug_target)->required();
  aug->add_option("--seed", aug_gan.seed);
  aug->add_option("--gan-steps", aug_gan.steps);

  fs::path train_data, train_ckpt, train_report, train_config;
  std::string train_variant = "fpmt";
  PipelineConfig train_cfg;
  auto* train = app.add_subcommand("train", "Run the three-stage pipeline and save a checkpoint");
  train->add_option("--data", train_data)->required()->check(CLI::ExistingFile);
  train->add_option("--config", train_config, "key = value file; flags given here override it")
      ->check(CLI::ExistingFile);
  auto* variant_opt = train->add_option("--variant", train_variant, "mt, pmt or fpmt");
  auto* labels_opt = train->add_option("--labels-per-class", train_cfg.labels_per_class);
  auto* unlabeled_opt = train->add_option("--unlabeled-per-class", train_cfg.unlabeled_per_class);
  auto* test_opt = train->add_option("--test-per-class", train_cfg.test_per_class);
  auto* seed_opt = train->add_option("--seed", train_cfg.seed);
  train->add_option("--out-ckpt", train_ckpt)->required();
  train->add_option("--report", train_report)->required();

  fs::path eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on every labeled row of a CSV");
  eval->add_option("--ckpt", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);

  fs::path grid_path, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Run variants x label budgets x seeds");
  ablate->add_option("--grid", grid_path)->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", ablate_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      save_csv(generate_synthetic(gen_spec), gen_out);
    } else if (*aug) {
      const Dataset ds = load_csv(aug_in);
      save_csv(balance_and_expand(ds, aug_target, aug_gan), aug_out, /*synthetic_column=*/true);
    } else if (*train) {
      // Flags override the config file, so remember them before loading it.
      PipelineConfig cfg = train_config.empty() ? PipelineConfig{} : load_config(train_config);
      if (*variant_opt || train_config.empty()) cfg.apply_variant(parse_variant(train_variant));
      if (*labels_opt) cfg.labels_per_class = train_cfg.labels_per_class;
      if (*unlabeled_opt) cfg.unlabeled_per_class = train_cfg.unlabeled_per_class;
      if (*test_opt) cfg.test_per_class = train_cfg.test_per_class;
      if (*seed_opt) cfg.seed = train_cfg.seed;
      const RunResult r = run_fpmt(train_data, cfg);
      save_checkpoint(train_ckpt, r.encoder, r.norm);
      write_file(train_report, [&](std::ostream& out) { write_report_csv(r.report, out); });
      for (const auto& line : r.report.log) std::cerr << line << '\n';
      print_metrics(r.metrics);
    } else if (*eval) {
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      Dataset ds = load_csv(eval_data);
      if (!ckpt.norm.empty()) ds = apply_norm(ds, ckpt.norm);
      Dataset labeled;
      labeled.dim = ds.dim;
      for (const auto& s : ds.samples) {
        if (s.label != Label::Unlabeled) labeled.samples.push_back(s);
      }
      print_metrics(evaluate(ckpt.encoder, labeled));
    } else if (*ablate) {
      const AblationGrid grid = load_grid(grid_path);
      fs::create_directories(ablate_out);
      const AblationTable table = run_ablation(grid, [](const MetricRow& row) {
        std::cerr << row.variant << " labels=" << row.labels_per_class << " seed=" << row.seed << ": ";
        if (row.ok()) {
          std::fprintf(stderr, "%.1f/%.1f/%.1f\n", row.cr, row.dr, row.f1);
        } else {
          std::cerr << "FAILED " << row.error << '\n';
        }
      });
      emit_report(table, ablate_out / "ablation_long.csv", ReportFormat::Csv);
      emit_report(table, ablate_out / "ablation.md", ReportFormat::Markdown);
      write_file(ablate_out / "ablation_aggregate.csv", [&](std::ostream& out) { write_aggregate_csv(table, out); });
      std::ifstream md(ablate_out / "ablation.md");
      std::cout << md.rdbuf();
      if (!table.all_ok()) return 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
