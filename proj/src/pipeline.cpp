#include "flowpref/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "flowpref/checklist.hpp"
#include "flowpref/metrics.hpp"
#include "flowpref/rem_eval.hpp"
#include "flowpref/sp_simulator.hpp"

namespace flowpref::cli {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& raw) {
  std::filesystem::path p(raw);
  return p.is_absolute() || base.empty() ? p : base / p;
}

void require_exists(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(what + " does not exist: " + path.string());
  }
}

json default_trainer() {
  return json{{"lora_alpha", 16},
              {"lora_r", 64},
              {"learning_rate", 1e-4},
              {"batch_size", 2},
              {"gradient_accumulation_steps", 16},
              {"lambda", nullptr}};
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  json value;
  try {
    value = json::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw ConfigError("cannot load config " + path.string() + ": " + e.what());
  }
  return from_json(value, path.parent_path());
}

PipelineConfig PipelineConfig::from_json(const json& value, const std::filesystem::path& base_dir) {
  rules::GraphConfig graph_config =
      value.contains("rules_config")
          ? rules::load_graph_config(resolve(base_dir, value.at("rules_config").get<std::string>()))
          : rules::GraphConfig{rules::default_graph(), rules::ScoreParams{}};
  if (value.contains("params")) {
    const auto& p = value.at("params");
    graph_config.params.alpha = p.value("alpha", graph_config.params.alpha);
    graph_config.params.beta = p.value("beta", graph_config.params.beta);
    graph_config.params.gamma = p.value("gamma", graph_config.params.gamma);
    graph_config.params.t1 = p.value("t1", graph_config.params.t1);
    graph_config.params.t2 = p.value("t2", graph_config.params.t2);
    graph_config.params.d = p.value("d", graph_config.params.d);
    graph_config.params.k = p.value("k", graph_config.params.k);
    graph_config.params.n = p.value("n", graph_config.params.n);
    graph_config.params.validate();
  }

  PipelineConfig config{.raw = value, .graph_config = std::move(graph_config)};

  if (value.contains("paths")) {
    const auto& paths = value.at("paths");
    auto read_path = [&](const char* key) -> std::filesystem::path {
      if (!paths.contains(key)) return {};
      return resolve(base_dir, paths.at(key).get<std::string>());
    };
    config.corpus_path = read_path("corpus");
    config.predicted_corpus_path = read_path("predicted_corpus");
    config.cases_dir = read_path("cases");
    config.output_dir = read_path("output");
    config.annotations_path = read_path("annotations");
    config.metrics_input_path = read_path("metrics_input");
  }
  for (const auto& [p, what] :
       {std::pair{&config.corpus_path, "paths.corpus"},
        std::pair{&config.predicted_corpus_path, "paths.predicted_corpus"},
        std::pair{&config.cases_dir, "paths.cases"},
        std::pair{&config.annotations_path, "paths.annotations"},
        std::pair{&config.metrics_input_path, "paths.metrics_input"}}) {
    if (!p->empty()) require_exists(*p, what);
  }

  config.backends = value.value("backends", json::object());
  // Resolve replay trace paths against the config location.
  for (auto& [role, spec] : config.backends.items()) {
    (void)role;
    if (spec.contains("trace")) {
      spec["trace"] = resolve(base_dir, spec.at("trace").get<std::string>()).string();
    }
  }

  config.seed = value.value("seed", std::uint64_t{0});
  config.workers = value.value("workers", 1);
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  if (value.contains("budgets")) {
    const auto& budgets = value.at("budgets");
    config.pair_budget = budgets.value("pair_budget", config.pair_budget);
    config.sample_count = budgets.value("sample_count", config.sample_count);
    config.metrics_samples = budgets.value("metrics_samples", config.metrics_samples);
  }
  config.tie_threshold = value.value("tie_threshold", 1.0);
  if (config.tie_threshold < 0.0) throw ConfigError("tie_threshold must be >= 0");
  config.round_cap = value.value("round_cap", 5);
  if (config.round_cap < 1) throw ConfigError("round_cap must be >= 1");
  config.retrieve_top_n = value.value("retrieve_top_n", std::size_t{4});
  if (value.contains("department_groups")) {
    config.department_groups =
        value.at("department_groups").get<std::map<std::string, std::string>>();
  }
  config.trainer = value.value("trainer", default_trainer());
  return config;
}

std::string PipelineConfig::config_hash() const { return to_hex(fnv1a64(raw.dump())); }

bool PipelineConfig::has_backend(const std::string& role) const {
  return backends.contains(role);
}

// ---------------------------------------------------------------------------
// Backend factory
// ---------------------------------------------------------------------------

namespace {

gateway::BackendConfig http_config_from_spec(const json& spec) {
  gateway::BackendConfig config;
  config.endpoint = spec.at("endpoint").get<std::string>();
  config.model = spec.value("model", "");
  config.auth_env = spec.value("auth_env", "");
  config.timeout = std::chrono::milliseconds(spec.value("timeout_ms", 30000));
  config.retry.max_attempts = spec.value("max_attempts", 3);
  config.retry.base_backoff = std::chrono::milliseconds(spec.value("backoff_ms", 100));
  config.requests_per_second = spec.value("requests_per_second", 0.0);
  config.validate();
  return config;
}

}  // namespace

std::shared_ptr<gateway::ChatBackend> make_chat_backend(const json& spec) {
  const std::string type = spec.value("type", "");
  if (type == "scripted") {
    std::map<std::string, std::string> table;
    if (spec.contains("table")) table = spec.at("table").get<std::map<std::string, std::string>>();
    std::optional<std::string> fallback;
    if (spec.contains("fallback")) fallback = spec.at("fallback").get<std::string>();
    return std::make_shared<gateway::ScriptedChatBackend>(std::move(table), std::move(fallback));
  }
  if (type == "sequence") {
    return std::make_shared<gateway::SequenceChatBackend>(
        spec.at("responses").get<std::vector<std::string>>(), spec.value("cycle", false));
  }
  if (type == "hash-judgment") {
    return std::make_shared<gateway::HashJudgmentBackend>(spec.value("seed", std::uint64_t{0}));
  }
  if (type == "hash-continuation") {
    return std::make_shared<gateway::HashContinuationBackend>(spec.value("seed", std::uint64_t{0}),
                                                              spec.value("rounds", 3));
  }
  if (type == "failing") {
    return std::make_shared<gateway::FailingChatBackend>(spec.value("message", "scripted failure"));
  }
  if (type == "replay") {
    return std::make_shared<gateway::ReplayChatBackend>(
        std::filesystem::path(spec.at("trace").get<std::string>()));
  }
  if (type == "http") {
    return std::make_shared<gateway::HttpChatBackend>(http_config_from_spec(spec));
  }
  throw ConfigError("unknown chat backend type: '" + type + "'");
}

std::shared_ptr<gateway::EmbeddingBackend> make_embedding_backend(const json& spec) {
  const std::string type = spec.value("type", "");
  if (type == "hash") {
    return std::make_shared<gateway::HashEmbeddingBackend>(
        spec.value("dim", std::size_t{16}), spec.value("seed", std::uint64_t{0}),
        spec.value("model_id", "hash-embed"));
  }
  if (type == "replay") {
    return std::make_shared<gateway::ReplayEmbeddingBackend>(
        std::filesystem::path(spec.at("trace").get<std::string>()));
  }
  if (type == "http") {
    return std::make_shared<gateway::HttpEmbeddingBackend>(http_config_from_spec(spec));
  }
  throw ConfigError("unknown embedding backend type: '" + type + "'");
}

// ---------------------------------------------------------------------------
// Shared output helpers
// ---------------------------------------------------------------------------

namespace {

void write_manifest(const PipelineConfig& config, const std::string& command,
                    const std::map<std::string, std::string>& backend_ids) {
  json manifest{{"command", command},
                {"config_hash", config.config_hash()},
                {"seed", config.seed},
                {"backends", backend_ids},
                {"version", kVersion}};
  write_text_file(config.output_dir / (command + "_manifest.json"), manifest.dump(2) + "\n");
}

void require_output_dir(const PipelineConfig& config) {
  if (config.output_dir.empty()) throw ConfigError("paths.output is required");
  std::filesystem::create_directories(config.output_dir);
}

std::vector<json> read_jsonl(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + what + ": " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError(what + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) out << row.dump() << '\n';
  write_text_file(path, out.str());
}

int classify_exit(const std::exception& e, std::ostream& err) {
  if (dynamic_cast<const gateway::GatewayError*>(&e)) {
    err << "backend error: " << e.what() << '\n';
    return kExitBackend;
  }
  err << "config error: " << e.what() << '\n';
  return kExitConfig;
}

}  // namespace

json scored_candidate_to_json(const ScoredCandidate& candidate) {
  json history = json::array();
  for (const auto& turn : candidate.history) {
    history.push_back({{"speaker", corpus::speaker_name(turn.speaker)}, {"text", turn.text}});
  }
  return json{{"record_id", candidate.record_id},
              {"dialogue_id", candidate.dialogue_id},
              {"provenance", corpus::source_name(candidate.provenance)},
              {"history", std::move(history)},
              {"candidate", candidate.candidate_text},
              {"score", scoring::candidate_score_to_json(candidate.score)}};
}

ScoredCandidate scored_candidate_from_json(const json& value) {
  ScoredCandidate candidate;
  candidate.record_id = value.at("record_id").get<std::string>();
  candidate.dialogue_id = value.at("dialogue_id").get<std::string>();
  candidate.provenance = corpus::source_from_name(value.at("provenance").get<std::string>());
  for (const auto& turn : value.at("history")) {
    candidate.history.push_back({corpus::speaker_from_name(turn.at("speaker").get<std::string>()),
                                 turn.at("text").get<std::string>()});
  }
  candidate.candidate_text = value.at("candidate").get<std::string>();
  candidate.score = scoring::candidate_score_from_json(value.at("score"));
  return candidate;
}

std::vector<ScoredCandidate> read_scores_file(const std::filesystem::path& path) {
  std::vector<ScoredCandidate> candidates;
  for (const auto& row : read_jsonl(path, "scores file")) {
    candidates.push_back(scored_candidate_from_json(row));
  }
  return candidates;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

int cmd_score(const PipelineConfig& config, const ScoreOptions& options, std::ostream& out,
              std::ostream& err) {
  try {
    if (config.corpus_path.empty()) throw ConfigError("paths.corpus is required for score");
    require_output_dir(config);
    if (!config.has_backend("rem") && !options.replay_trace) {
      throw ConfigError("backends.rem is required for score");
    }
    const bool predicted_from_file = !config.predicted_corpus_path.empty();
    const bool predicted_generated = !predicted_from_file && config.has_backend("continuation");

    if (options.dry_run) {
      out << "dry run: config ok, corpus " << config.corpus_path.string() << ", predicted source: "
          << (predicted_from_file ? "file" : predicted_generated ? "continuation backend" : "none")
          << "\n";
      return kExitOk;
    }

    const auto& params = config.graph_config.params;
    const auto& graph = config.graph_config.graph;

    auto report = corpus::load_dialogues(config.corpus_path);
    auto& dialogues = report.dialogues;
    if (config.sample_count > 0 && dialogues.size() > config.sample_count) {
      dialogues.resize(config.sample_count);
    }

    std::vector<json> failures;
    for (const auto& issue : report.issues) {
      failures.push_back(json{{"stage", "load"}, {"line", issue.line}, {"message", issue.message}});
    }

    // REM and continuation backends, optionally recorded or replayed.
    std::shared_ptr<gateway::TraceWriter> recorder;
    if (options.record_trace && !options.replay_trace) {
      recorder = std::make_shared<gateway::TraceWriter>(*options.record_trace);
    }
    auto build_backend = [&](const std::string& role) -> std::shared_ptr<gateway::ChatBackend> {
      if (options.replay_trace) {
        return std::make_shared<gateway::ReplayChatBackend>(*options.replay_trace);
      }
      auto backend = make_chat_backend(config.backends.at(role));
      if (recorder) backend = std::make_shared<gateway::RecordingChatBackend>(backend, recorder);
      return backend;
    };
    auto rem_backend = build_backend("rem");
    std::shared_ptr<gateway::ChatBackend> continuation_backend;
    if (predicted_generated) continuation_backend = build_backend("continuation");

    std::map<std::string, corpus::Dialogue> predicted_map;
    if (predicted_from_file) {
      auto predicted_report = corpus::load_dialogues(config.predicted_corpus_path);
      for (const auto& issue : predicted_report.issues) {
        failures.push_back(
            json{{"stage", "load_predicted"}, {"line", issue.line}, {"message", issue.message}});
      }
      for (auto& dialogue : predicted_report.dialogues) {
        predicted_map[dialogue.id] = std::move(dialogue);
      }
    }

    std::vector<corpus::SplitRecord> records;
    std::vector<corpus::Source> provenances;
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
      const auto& dialogue = dialogues[i];
      corpus::SplitRecord sampled;
      try {
        sampled = corpus::random_split(dialogue, config.seed ^ fnv1a64(dialogue.id), params.n);
      } catch (const std::exception& e) {
        failures.push_back(json{{"stage", "split"}, {"id", dialogue.id}, {"message", e.what()}});
        continue;
      }
      const std::size_t split_index = std::stoul(sampled.id.substr(sampled.id.rfind(':') + 1));

      corpus::SplitRecord sampled_record = sampled;
      sampled_record.id = dialogue.id + "#sampled";
      records.push_back(std::move(sampled_record));
      provenances.push_back(corpus::Source::Sampled);

      if (predicted_from_file) {
        auto it = predicted_map.find(dialogue.id);
        if (it == predicted_map.end()) {
          failures.push_back(json{{"stage", "predicted"},
                                  {"id", dialogue.id},
                                  {"message", "no predicted dialogue for this id"}});
          continue;
        }
        try {
          corpus::SplitRecord predicted = corpus::split_at(it->second, split_index, params.n);
          predicted.id = dialogue.id + "#predicted";
          records.push_back(std::move(predicted));
          provenances.push_back(corpus::Source::Predicted);
        } catch (const std::exception& e) {
          failures.push_back(json{{"stage", "predicted"}, {"id", dialogue.id}, {"message", e.what()}});
        }
      } else if (predicted_generated) {
        try {
          const auto& donor = dialogues[(i + 1) % dialogues.size()];
          std::string prompt = corpus::continuation_prompt(donor, sampled.history);
          std::string completion =
              continuation_backend->chat(gateway::make_user_request(prompt, 0.0, 1024));
          auto turns = corpus::parse_continuation(completion, sampled.history);
          corpus::SplitRecord predicted;
          predicted.dialogue_id = dialogue.id;
          predicted.id = dialogue.id + "#predicted";
          predicted.history = sampled.history;
          predicted.candidate = turns.front();
          for (std::size_t t = 1;
               t + 1 < turns.size() && predicted.future.size() < static_cast<std::size_t>(params.n);
               t += 2) {
            predicted.future.push_back({turns[t], turns[t + 1]});
          }
          records.push_back(std::move(predicted));
          provenances.push_back(corpus::Source::Predicted);
        } catch (const std::exception& e) {
          failures.push_back(
              json{{"stage", "continuation"}, {"id", dialogue.id}, {"message", e.what()}});
        }
      }
    }

    if (records.empty()) {
      write_jsonl(config.output_dir / "score_failures.jsonl", failures);
      err << "no scoreable records\n";
      return kExitEmpty;
    }

    const auto checkpoint_path = config.output_dir / "scores.checkpoint.jsonl";
    if (!options.resume) std::filesystem::remove(checkpoint_path);

    scoring::RemScoreCache cache;
    auto batch = scoring::score_batch(records, graph, params, *rem_backend, checkpoint_path, &cache,
                                      config.workers);

    std::map<std::string, const scoring::CandidateScore*> by_id;
    for (const auto& score : batch.scores) by_id[score.record_id] = &score;

    std::ostringstream lines;
    std::size_t written = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto it = by_id.find(records[i].id);
      if (it == by_id.end()) continue;
      ScoredCandidate candidate{records[i].id,      records[i].dialogue_id, provenances[i],
                                records[i].history, records[i].candidate.text, *it->second};
      lines << scored_candidate_to_json(candidate).dump() << '\n';
      ++written;
    }
    write_text_file(config.output_dir / "scores.jsonl", lines.str());

    for (const auto& failure : batch.failures) {
      failures.push_back(
          json{{"stage", "score"}, {"id", failure.record_id}, {"message", failure.message}});
    }
    write_jsonl(config.output_dir / "score_failures.jsonl", failures);

    std::map<std::string, std::string> backend_ids{{"rem", rem_backend->id()}};
    if (continuation_backend) backend_ids["continuation"] = continuation_backend->id();
    write_manifest(config, "score", backend_ids);

    out << "scored " << written << "/" << records.size() << " records (" << failures.size()
        << " issues)\n";
    return written == 0 ? kExitEmpty : kExitOk;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

// ---------------------------------------------------------------------------
// build-prefs
// ---------------------------------------------------------------------------

namespace {

json gap_histogram(const std::vector<prefs::PreferencePair>& pairs, std::size_t bins = 10) {
  json histogram{{"bin_edges", json::array()}, {"counts", json::array()}};
  if (pairs.empty()) return histogram;
  double max_gap = 0.0;
  for (const auto& pair : pairs) max_gap = std::max(max_gap, pair.gap);
  if (max_gap <= 0.0) max_gap = 1.0;
  std::vector<std::size_t> counts(bins, 0);
  for (const auto& pair : pairs) {
    auto bin = std::min(bins - 1, static_cast<std::size_t>(pair.gap / max_gap * static_cast<double>(bins)));
    ++counts[bin];
  }
  for (std::size_t i = 0; i <= bins; ++i) {
    histogram["bin_edges"].push_back(max_gap * static_cast<double>(i) / static_cast<double>(bins));
  }
  for (auto count : counts) histogram["counts"].push_back(count);
  return histogram;
}

}  // namespace

int cmd_build_prefs(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  try {
    require_output_dir(config);
    const auto scores_path = config.output_dir / "scores.jsonl";
    require_exists(scores_path, "scores file (run `score` first)");
    auto scored = read_scores_file(scores_path);

    std::map<std::string, const ScoredCandidate*> sampled;
    std::map<std::string, const ScoredCandidate*> predicted;
    for (const auto& candidate : scored) {
      (candidate.provenance == corpus::Source::Sampled ? sampled : predicted)
          .emplace(candidate.dialogue_id, &candidate);
    }

    std::vector<prefs::PreferencePair> pairs;
    for (const auto& [dialogue_id, sample] : sampled) {
      auto it = predicted.find(dialogue_id);
      if (it == predicted.end()) continue;
      pairs.push_back(prefs::make_pair(
          dialogue_id, sample->history, {sample->candidate_text, corpus::Source::Sampled},
          {it->second->candidate_text, corpus::Source::Predicted}, sample->score, it->second->score,
          config.tie_threshold));
    }

    const auto tie_count = static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(),
                      [](const prefs::PreferencePair& p) { return p.label == prefs::Label::Tie; }));

    std::vector<std::string> warnings;
    auto selected = prefs::select_pairs(pairs, config.pair_budget,
                                        [&](const std::string& w) { warnings.push_back(w); });

    json stats{{"pairs_total", pairs.size()},
               {"ties", tie_count},
               {"selected", selected.size()},
               {"tie_threshold", config.tie_threshold},
               {"pair_budget", config.pair_budget},
               {"gap_histogram", gap_histogram(pairs)},
               {"warnings", warnings}};

    if (selected.empty()) {
      stats["sampled_wins"] = 0;
      stats["predicted_wins"] = 0;
      write_text_file(config.output_dir / "prefs_stats.json", stats.dump(2) + "\n");
      write_manifest(config, "build-prefs", {});
      err << "no preference pairs above the tie threshold\n";
      return kExitEmpty;
    }

    prefs::TrainingMeta meta{config.graph_config.params, config.trainer};
    prefs::export_dpo(selected, config.output_dir / "dpo.jsonl", meta);

    auto provenance = prefs::provenance_stats(selected);
    stats["sampled_wins"] = provenance.sampled_wins;
    stats["predicted_wins"] = provenance.predicted_wins;
    if (std::isfinite(provenance.ratio)) {
      stats["win_loss_ratio"] = provenance.ratio;
    } else {
      stats["win_loss_ratio"] = "inf";
    }
    write_text_file(config.output_dir / "prefs_stats.json", stats.dump(2) + "\n");
    write_manifest(config, "build-prefs", {});

    out << "selected " << selected.size() << " of " << pairs.size() << " pairs (" << tie_count
        << " ties); sampled:predicted wins = " << provenance.sampled_wins << ":"
        << provenance.predicted_wins << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

namespace {

std::vector<std::filesystem::path> case_bundle_dirs(const std::filesystem::path& cases_dir) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(cases_dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "info.txt")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace

int cmd_simulate(const PipelineConfig& config, const SimulateOptions& options, std::ostream& out,
                 std::ostream& err) {
  try {
    if (config.cases_dir.empty()) throw ConfigError("paths.cases is required for simulate");
    require_output_dir(config);
    for (const char* role : {"doctor", "patient", "embedding"}) {
      if (!config.has_backend(role)) {
        throw ConfigError(std::string("backends.") + role + " is required for simulate");
      }
    }

    auto dirs = case_bundle_dirs(config.cases_dir);
    if (dirs.empty()) throw ConfigError("no case bundles under " + config.cases_dir.string());

    auto doctor = make_chat_backend(config.backends.at("doctor"));
    auto patient = make_chat_backend(config.backends.at("patient"));
    auto embedder = make_embedding_backend(config.backends.at("embedding"));

    spsim::TranscriptStore store(config.output_dir / "transcripts");
    spsim::SessionOptions session_options;
    session_options.round_cap = options.round_cap.value_or(config.round_cap);
    session_options.retrieve_top_n = config.retrieve_top_n;

    std::size_t succeeded = 0;
    std::vector<json> failures;
    for (const auto& dir : dirs) {
      try {
        auto index = spsim::ingest_case(dir, *embedder);
        auto transcript = spsim::run_session(index, *doctor, *patient, *embedder, session_options);
        store.put(transcript);
        ++succeeded;
      } catch (const spsim::SessionError& e) {
        store.put(e.partial);  // keep the partial transcript, marked aborted
        failures.push_back(
            json{{"case", dir.filename().string()}, {"message", e.what()}, {"partial", true}});
      } catch (const std::exception& e) {
        failures.push_back(
            json{{"case", dir.filename().string()}, {"message", e.what()}, {"partial", false}});
      }
    }

    write_jsonl(config.output_dir / "simulate_failures.jsonl", failures);
    write_manifest(config, "simulate",
                   {{"doctor", doctor->id()}, {"patient", patient->id()}, {"embedding", embedder->id()}});

    out << "simulated " << succeeded << "/" << dirs.size() << " cases\n";
    return succeeded > 0 ? kExitOk : kExitBackend;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const PipelineConfig& config, const EvaluateOptions& options, std::ostream& out,
                 std::ostream& err) {
  try {
    if (config.cases_dir.empty()) throw ConfigError("paths.cases is required for evaluate");
    require_output_dir(config);
    std::filesystem::path annotations_path =
        options.annotations.value_or(config.annotations_path);
    if (annotations_path.empty()) throw ConfigError("annotations path is required for evaluate");
    require_exists(annotations_path, "annotations file");

    std::map<std::string, checklist::Checklist> checklists;
    std::map<std::string, std::string> case_to_group;
    for (const auto& dir : case_bundle_dirs(config.cases_dir)) {
      auto patient = spsim::load_case_bundle(dir);
      auto group_it = config.department_groups.find(patient.department);
      case_to_group[patient.id] =
          group_it == config.department_groups.end() ? patient.department : group_it->second;
      checklists.emplace(patient.id, std::move(patient.checklist));
    }

    auto annotations = checklist::annotation_ingest(annotations_path);
    std::vector<checklist::CaseFractions> fractions;
    for (const auto& annotation : annotations) {
      auto it = checklists.find(annotation.case_id);
      if (it == checklists.end()) {
        throw ConfigError("annotation references unknown case: " + annotation.case_id);
      }
      fractions.push_back(checklist::score_case(annotation, it->second));
    }

    auto report = checklist::aggregate(fractions, case_to_group);

    json report_json{{"groups", json::array()},
                     {"overall",
                      {{"group", report.overall.group},
                       {"cases", report.overall.cases},
                       {"symptoms", report.overall.symptoms},
                       {"tests", report.overall.tests},
                       {"diseases", report.overall.diseases}}}};
    for (const auto& group : report.groups) {
      report_json["groups"].push_back({{"group", group.group},
                                       {"cases", group.cases},
                                       {"symptoms", group.symptoms},
                                       {"tests", group.tests},
                                       {"diseases", group.diseases}});
    }
    write_text_file(config.output_dir / "checklist_report.json", report_json.dump(2) + "\n");
    write_text_file(config.output_dir / "checklist_report.md",
                    checklist::render_report_markdown(report));
    write_text_file(config.output_dir / "checklist_report.csv", checklist::render_report_csv(report));
    write_manifest(config, "evaluate", {});

    out << checklist::render_report_markdown(report);
    return kExitOk;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

int cmd_metrics(const PipelineConfig& config, const MetricsOptions& options, std::ostream& out,
                std::ostream& err) {
  try {
    require_output_dir(config);
    std::filesystem::path input = options.input.value_or(config.metrics_input_path);
    if (input.empty()) throw ConfigError("metrics input path is required");
    require_exists(input, "metrics input");
    if (!config.has_backend("judge")) throw ConfigError("backends.judge is required for metrics");
    auto judge = make_chat_backend(config.backends.at("judge"));

    auto rows = read_jsonl(input, "metrics input");
    if (rows.empty()) throw ConfigError("metrics input is empty: " + input.string());

    // Seeded subset selection, order-preserving.
    std::vector<std::size_t> indices(rows.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    const std::size_t samples = options.samples.value_or(config.metrics_samples);
    if (samples > 0 && samples < indices.size()) {
      std::uint64_t state = config.seed;
      for (std::size_t i = 0; i < samples; ++i) {
        state = splitmix64(state);
        std::size_t j = i + static_cast<std::size_t>(state % (indices.size() - i));
        std::swap(indices[i], indices[j]);
      }
      indices.resize(samples);
      std::sort(indices.begin(), indices.end());
    }

    std::vector<metrics::ImplicationJudgment> judgments;
    std::vector<json> failures;
    for (std::size_t index : indices) {
      const auto& row = rows[index];
      try {
        std::string prompt = metrics::implication_prompt(row.at("predict").get<std::string>(),
                                                         row.at("reference").get<std::string>());
        std::string completion = judge->chat(gateway::make_user_request(prompt, 0.0, 64));
        judgments.push_back(metrics::parse_implication(completion));
      } catch (const std::exception& e) {
        failures.push_back(json{{"row", index}, {"message", e.what()}});
      }
    }

    if (judgments.empty()) {
      write_jsonl(config.output_dir / "gpt_distance_failures.jsonl", failures);
      err << "no judgments produced\n";
      return kExitEmpty;
    }

    auto report = metrics::distance_report(judgments);
    json report_json{{"counts",
                      {{"fully", report.fully},
                       {"partially", report.partially},
                       {"not", report.not_implied}}},
                     {"total", report.total},
                     {"distance", report.distance},
                     {"failed_rows", failures.size()}};
    write_text_file(config.output_dir / "gpt_distance_report.json", report_json.dump(2) + "\n");
    write_jsonl(config.output_dir / "gpt_distance_failures.jsonl", failures);
    write_manifest(config, "metrics", {{"judge", judge->id()}});

    out << "gpt-distance = " << report.distance << " over " << report.total << " rows\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

// ---------------------------------------------------------------------------
// rem subcommands
// ---------------------------------------------------------------------------

namespace {

rem::RemQuery query_from_json(const json& value, const rules::RuleGraph& graph) {
  rem::RemQuery query;
  query.rule = graph.rule(value.at("rule_id").get<std::string>());
  for (const auto& turn : value.at("history")) {
    query.history.push_back({corpus::speaker_from_name(turn.at("speaker").get<std::string>()),
                             turn.at("text").get<std::string>()});
  }
  return query;
}

rem::AnnotatedSample annotated_from_json(const json& value, const rules::RuleGraph& graph) {
  rem::AnnotatedSample sample;
  sample.query = query_from_json(value, graph);
  sample.gold.comment = value.at("comment").get<std::string>();
  sample.gold.score = value.at("score").get<int>();
  sample.annotator_ids = value.value("annotators", std::vector<std::string>{"unattributed"});
  return sample;
}

}  // namespace

int cmd_rem_prelabel(const PipelineConfig& config, const RemPrelabelOptions& options,
                     std::ostream& out, std::ostream& err) {
  try {
    require_output_dir(config);
    if (!config.has_backend("rem")) throw ConfigError("backends.rem is required for rem prelabel");
    auto backend = make_chat_backend(config.backends.at("rem"));
    const auto& graph = config.graph_config.graph;

    std::vector<rem::RemQuery> queries;
    for (const auto& row : read_jsonl(options.queries, "queries file")) {
      queries.push_back(query_from_json(row, graph));
    }
    std::vector<rem::AnnotatedSample> fewshot;
    for (const auto& row : read_jsonl(options.fewshot, "fewshot file")) {
      fewshot.push_back(annotated_from_json(row, graph));
    }

    auto outcomes = rem::prelabel(queries, fewshot, *backend);
    std::vector<json> rows;
    std::size_t succeeded = 0;
    for (const auto& outcome : outcomes) {
      if (outcome.judgment) {
        rows.push_back(json{{"comment", outcome.judgment->comment}, {"score", outcome.judgment->score}});
        ++succeeded;
      } else {
        rows.push_back(json{{"error", outcome.error}});
      }
    }
    write_jsonl(options.output, rows);
    write_manifest(config, "rem-prelabel", {{"rem", backend->id()}});

    out << "prelabelled " << succeeded << "/" << outcomes.size() << " queries\n";
    return succeeded > 0 ? kExitOk : kExitEmpty;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

int cmd_rem_export(const PipelineConfig& config, const RemExportOptions& options, std::ostream& out,
                   std::ostream& err) {
  try {
    require_output_dir(config);
    const auto& graph = config.graph_config.graph;
    std::vector<rem::AnnotatedSample> samples;
    for (const auto& row : read_jsonl(options.samples, "samples file")) {
      samples.push_back(annotated_from_json(row, graph));
    }
    rem::export_training_file(samples, options.output);
    write_manifest(config, "rem-export", {});
    out << "exported " << samples.size() << " training lines to " << options.output.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

int cmd_rem_agreement(const PipelineConfig& config, const RemAgreementOptions& options,
                      std::ostream& out, std::ostream& err) {
  try {
    require_output_dir(config);
    std::vector<int> preds;
    std::vector<int> golds;
    for (const auto& row : read_jsonl(options.file, "agreement file")) {
      preds.push_back(row.at("pred").get<int>());
      golds.push_back(row.at("gold").get<int>());
    }
    auto agreement = rem::agreement_metrics(preds, golds);
    json report{{"exact_match", agreement.exact}, {"fuzzy_match", agreement.fuzzy},
                {"samples", preds.size()}};
    write_text_file(config.output_dir / "rem_agreement_report.json", report.dump(2) + "\n");
    write_manifest(config, "rem-agreement", {});
    out << "exact " << agreement.exact << "%, fuzzy " << agreement.fuzzy << "% over " << preds.size()
        << " samples\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return classify_exit(e, err);
  }
}

}  // namespace flowpref::cli
