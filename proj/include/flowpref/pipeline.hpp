#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "flowpref/corpus.hpp"
#include "flowpref/gateway.hpp"
#include "flowpref/preference.hpp"
#include "flowpref/rule_graph.hpp"
#include "flowpref/trajectory_scoring.hpp"

namespace flowpref::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;   // configuration / schema problems
inline constexpr int kExitBackend = 3;  // backend failures
inline constexpr int kExitEmpty = 4;    // command produced an empty result
inline constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operator configuration: scoring parameters, backend specs, paths, seeds
// and budgets. Loaded from a single JSON file; input paths must exist.
struct PipelineConfig {
  nlohmann::json raw;
  rules::GraphConfig graph_config;

  std::filesystem::path corpus_path;
  std::filesystem::path predicted_corpus_path;
  std::filesystem::path cases_dir;
  std::filesystem::path output_dir;
  std::filesystem::path annotations_path;
  std::filesystem::path metrics_input_path;

  nlohmann::json backends;  // role -> backend spec
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t pair_budget = 2000;
  std::size_t sample_count = 0;     // 0 = use the whole corpus
  std::size_t metrics_samples = 0;  // 0 = all rows
  double tie_threshold = 1.0;
  int round_cap = 5;
  std::size_t retrieve_top_n = 4;
  std::map<std::string, std::string> department_groups;
  nlohmann::json trainer;

  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig from_json(const nlohmann::json& value,
                                  const std::filesystem::path& base_dir);

  std::string config_hash() const;
  bool has_backend(const std::string& role) const;
};

// Backend factory for config specs. Chat types: scripted, sequence,
// hash-judgment, hash-continuation, failing, http, replay. Embedding
// types: hash, http, replay.
std::shared_ptr<gateway::ChatBackend> make_chat_backend(const nlohmann::json& spec);
std::shared_ptr<gateway::EmbeddingBackend> make_embedding_backend(const nlohmann::json& spec);

struct ScoreOptions {
  bool dry_run = false;
  bool resume = false;
  std::optional<std::filesystem::path> record_trace;
  std::optional<std::filesystem::path> replay_trace;
};

struct SimulateOptions {
  std::optional<int> round_cap;
};

struct EvaluateOptions {
  std::optional<std::filesystem::path> annotations;
};

struct MetricsOptions {
  std::optional<std::filesystem::path> input;
  std::optional<std::size_t> samples;
};

struct RemPrelabelOptions {
  std::filesystem::path queries;
  std::filesystem::path fewshot;
  std::filesystem::path output;
};

struct RemExportOptions {
  std::filesystem::path samples;
  std::filesystem::path output;
};

struct RemAgreementOptions {
  std::filesystem::path file;  // JSONL of {pred, gold}
};

// Commands return process exit codes and write their reports under
// config.output_dir plus a run manifest.
int cmd_score(const PipelineConfig& config, const ScoreOptions& options, std::ostream& out,
              std::ostream& err);
int cmd_build_prefs(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const PipelineConfig& config, const SimulateOptions& options, std::ostream& out,
                 std::ostream& err);
int cmd_evaluate(const PipelineConfig& config, const EvaluateOptions& options, std::ostream& out,
                 std::ostream& err);
int cmd_metrics(const PipelineConfig& config, const MetricsOptions& options, std::ostream& out,
                std::ostream& err);
int cmd_rem_prelabel(const PipelineConfig& config, const RemPrelabelOptions& options,
                     std::ostream& out, std::ostream& err);
int cmd_rem_export(const PipelineConfig& config, const RemExportOptions& options, std::ostream& out,
                   std::ostream& err);
int cmd_rem_agreement(const PipelineConfig& config, const RemAgreementOptions& options,
                      std::ostream& out, std::ostream& err);

// One line per scored candidate in scores.jsonl.
struct ScoredCandidate {
  std::string record_id;
  std::string dialogue_id;
  corpus::Source provenance = corpus::Source::Sampled;
  std::vector<corpus::Turn> history;
  std::string candidate_text;
  scoring::CandidateScore score;
};

nlohmann::json scored_candidate_to_json(const ScoredCandidate& candidate);
ScoredCandidate scored_candidate_from_json(const nlohmann::json& value);
std::vector<ScoredCandidate> read_scores_file(const std::filesystem::path& path);

}  // namespace flowpref::cli
