#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flowpref/pipeline.hpp"

namespace cli = flowpref::cli;

int main(int argc, char** argv) {
  CLI::App app{"Process-rule preference pipeline for multi-turn dialogue models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);

  std::string config_path;
  app.add_option("-c,--config", config_path, "Pipeline configuration file (JSON)")->required();

  // score
  auto* score = app.add_subcommand("score", "Split dialogues and score candidates with the rule evaluator");
  cli::ScoreOptions score_options;
  score->add_flag("--dry-run", score_options.dry_run, "Validate the configuration, no backend calls");
  score->add_flag("--resume", score_options.resume, "Reuse the scoring checkpoint");
  std::string record_trace, replay_trace;
  score->add_option("--record-trace", record_trace, "Record backend traffic to this trace file");
  score->add_option("--replay-trace", replay_trace, "Serve backend traffic from this trace file");

  // build-prefs
  auto* build_prefs = app.add_subcommand("build-prefs", "Build and export ranked preference pairs");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run patient-simulator sessions for every case");
  cli::SimulateOptions simulate_options;
  int round_cap_override = 0;
  simulate->add_option("--round-cap", round_cap_override, "Override the session round cap");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score transcripts against case checklists");
  std::string annotations_path;
  evaluate->add_option("--annotations", annotations_path, "Annotation marks file (JSONL)");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Judge predictions against references");
  std::string metrics_input;
  std::size_t metrics_samples = 0;
  metrics->add_option("--input", metrics_input, "JSONL of {predict, reference}");
  metrics->add_option("--samples", metrics_samples, "Seeded subset size (0 = all rows)");

  // rem
  auto* rem = app.add_subcommand("rem", "Rule-evaluator data utilities");
  rem->require_subcommand(1);
  auto* rem_prelabel = rem->add_subcommand("prelabel", "Draft judgments for unlabelled queries");
  std::string prelabel_queries, prelabel_fewshot, prelabel_output;
  rem_prelabel->add_option("--queries", prelabel_queries, "Queries file (JSONL)")->required();
  rem_prelabel->add_option("--fewshot", prelabel_fewshot, "Annotated exemplars (JSONL)")->required();
  rem_prelabel->add_option("--output", prelabel_output, "Output judgments file")->required();

  auto* rem_export = rem->add_subcommand("export", "Export evaluator training data");
  std::string export_samples, export_output;
  rem_export->add_option("--samples", export_samples, "Annotated samples (JSONL)")->required();
  rem_export->add_option("--output", export_output, "Training file path")->required();

  auto* rem_agreement = rem->add_subcommand("agreement", "Exact/fuzzy agreement of predictions vs gold");
  std::string agreement_file;
  rem_agreement->add_option("--file", agreement_file, "JSONL of {pred, gold}")->required();

  CLI11_PARSE(app, argc, argv);

  cli::PipelineConfig config = [&]() {
    try {
      return cli::PipelineConfig::load(config_path);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      std::exit(cli::kExitConfig);
    }
  }();

  if (score->parsed()) {
    if (!record_trace.empty()) score_options.record_trace = record_trace;
    if (!replay_trace.empty()) score_options.replay_trace = replay_trace;
    return cli::cmd_score(config, score_options, std::cout, std::cerr);
  }
  if (build_prefs->parsed()) {
    return cli::cmd_build_prefs(config, std::cout, std::cerr);
  }
  if (simulate->parsed()) {
    if (round_cap_override > 0) simulate_options.round_cap = round_cap_override;
    return cli::cmd_simulate(config, simulate_options, std::cout, std::cerr);
  }
  if (evaluate->parsed()) {
    cli::EvaluateOptions options;
    if (!annotations_path.empty()) options.annotations = annotations_path;
    return cli::cmd_evaluate(config, options, std::cout, std::cerr);
  }
  if (metrics->parsed()) {
    cli::MetricsOptions options;
    if (!metrics_input.empty()) options.input = metrics_input;
    if (metrics_samples > 0) options.samples = metrics_samples;
    return cli::cmd_metrics(config, options, std::cout, std::cerr);
  }
  if (rem->parsed()) {
    if (rem_prelabel->parsed()) {
      return cli::cmd_rem_prelabel(config, {prelabel_queries, prelabel_fewshot, prelabel_output},
                                   std::cout, std::cerr);
    }
    if (rem_export->parsed()) {
      return cli::cmd_rem_export(config, {export_samples, export_output}, std::cout, std::cerr);
    }
    if (rem_agreement->parsed()) {
      return cli::cmd_rem_agreement(config, {agreement_file}, std::cout, std::cerr);
    }
  }
  return cli::kExitConfig;
}
