// Command line front end: one subcommand per pipeline stage plus stats.
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "syndoc/syndoc.hpp"

namespace {

using syndoc::PipelineContext;

std::string stats_table(const syndoc::DatasetStats& s) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Domain" << std::setw(16) << "Category"
      << std::right << std::setw(8) << "# Doc" << std::setw(8) << "# QA"
      << std::setw(8) << "Set 1" << std::setw(8) << "Set 2" << std::setw(8) << "Set 3"
      << std::setw(8) << "Set 4" << '\n';
  out << std::string(76, '-') << '\n';
  out << std::left << std::setw(12) << s.domain << std::setw(16) << s.category
      << std::right << std::setw(8) << s.n_doc << std::setw(8) << s.n_qa
      << std::setw(8) << s.set1 << std::setw(8) << s.set2 << std::setw(8) << s.set3
      << std::setw(8) << s.set4 << '\n';
  return out.str();
}

syndoc::DatasetStats compute_stats(const PipelineContext& ctx) {
  if (std::filesystem::exists(ctx.paths.stats())) {
    return syndoc::stats_from_json(syndoc::detail::read_json_file(ctx.paths.stats()));
  }
  const auto records = syndoc::load_qa_records(ctx.paths.qa());
  const auto subsets = syndoc::build_subsets(records);
  syndoc::DatasetStats s;
  s.domain = ctx.config.dataset_id;
  s.category = ctx.config.category;
  s.n_doc = syndoc::load_entity_sets(ctx.paths.entities()).size();
  s.n_qa = syndoc::pipeline_questions(ctx).size();
  s.set1 = subsets.all.size();
  s.set2 = subsets.meaningful.size();
  s.set3 = subsets.consistent.size();
  s.set4 = subsets.both.size();
  return s;
}

void report_stage(const std::string& name, bool ran) {
  std::cout << "stage " << name << ": " << (ran ? "completed" : "already done") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SynDoc: synthetic warm-up pipeline for zero-shot document KIE"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> backend_override;
  bool dry_run = false;
  app.add_option("--config", config_path, "Run configuration JSON file")->required();
  app.add_option("--seed", seed_override, "Override the config seed");
  app.add_option("--backend", backend_override, "Override the backend name");
  app.add_flag("--dry-run", dry_run, "Show what would run, change nothing");

  auto* cmd_parse =
      app.add_subcommand("parse", "Normalize raw OCR/PDF inputs into canonical entities");
  auto* cmd_generate =
      app.add_subcommand("generate", "Generate and verify synthetic QA records");
  auto* cmd_tune = app.add_subcommand("tune", "Run staged Warmer adaptation");
  auto* cmd_infer = app.add_subcommand("infer", "Run the recursive inference loop");
  auto* cmd_eval = app.add_subcommand("eval", "Score traces against golds");
  auto* cmd_stats = app.add_subcommand("stats", "Print dataset statistics");

  CLI11_PARSE(app, argc, argv);

  try {
    syndoc::RunConfig config = syndoc::load_run_config(config_path);
    if (seed_override) {
      config.seed = *seed_override;
      config.generation.seed = *seed_override;
      config.tuning.seed = *seed_override;
    }
    if (backend_override) config.backend.name = *backend_override;

    PipelineContext ctx = syndoc::open_run(config);
    std::cout << "run " << ctx.hash << " at " << ctx.paths.root.string() << '\n';

    if (dry_run) {
      const auto pending = syndoc::pending_stages(ctx);
      std::cout << "pending stages:";
      if (pending.empty()) std::cout << " none";
      for (const auto& s : pending) std::cout << ' ' << s;
      std::cout << '\n';
      return 0;
    }

    if (cmd_parse->parsed()) {
      report_stage("parse", syndoc::stage_parse(ctx));
    } else if (cmd_generate->parsed()) {
      report_stage("generate", syndoc::stage_generate(ctx));
      report_stage("verify", syndoc::stage_verify(ctx));
      std::cout << stats_table(compute_stats(ctx));
    } else if (cmd_tune->parsed()) {
      report_stage("tune", syndoc::stage_tune(ctx));
    } else if (cmd_infer->parsed()) {
      report_stage("infer", syndoc::stage_infer(ctx));
    } else if (cmd_eval->parsed()) {
      report_stage("eval", syndoc::stage_eval(ctx));
      std::ifstream table(ctx.paths.eval_table());
      std::cout << table.rdbuf();
    } else if (cmd_stats->parsed()) {
      std::cout << stats_table(compute_stats(ctx));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
