#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowpref/corpus.hpp"
#include "flowpref/gateway.hpp"
#include "flowpref/rule_graph.hpp"
#include "flowpref/util.hpp"

namespace flowpref::rem {

// One rule-compliance question: does the dialogue prefix (ending with a
// doctor turn) follow the rule?
struct RemQuery {
  rules::Rule rule;
  std::vector<corpus::Turn> history;
};

struct RemJudgment {
  std::string comment;
  int score = 0;  // 0 none, 1 partial, 2 complete compliance
};

struct AnnotatedSample {
  RemQuery query;
  RemJudgment gold;
  std::vector<std::string> annotator_ids;
};

struct RemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : RemError {
  std::string raw;
  ParseError(const std::string& message, std::string raw_text)
      : RemError(message), raw(std::move(raw_text)) {}
};

// Renders the evaluator question. The history is serialized as
// "Patient:/Doctor:" lines; the prompt always ends with "Assistant:".
std::string render_prompt(const RemQuery& query,
                          const corpus::SpeakerLabels& labels = corpus::SpeakerLabels::defaults());

// Inverse of parse_judgment for gold data: "<comment> Score: <n>."
std::string format_completion(const RemJudgment& judgment);

// Extracts the trailing "Score: <n>" (last occurrence wins); the comment is
// everything before it. Scores outside {0,1,2} raise ParseError.
RemJudgment parse_judgment(const std::string& completion);

struct RuleScoreOptions {
  int parse_retries = 2;  // extra attempts per repetition on unparsable output
  int max_output_tokens = 256;
  WarningSink warn = null_warning_sink();
};

// Mean of k evaluator judgments for one query, in [0,2]. Repetitions whose
// output stays unparsable after the retry budget are dropped from the mean;
// if none parse, RemError is raised. Gateway errors propagate.
double rule_score(const RemQuery& query, int k, gateway::ChatBackend& backend,
                  const RuleScoreOptions& options = {});

struct PrelabelOutcome {
  std::optional<RemJudgment> judgment;
  std::string error;  // set when the sample failed
};

// Drafts judgments for unlabelled queries using few-shot exemplars.
// Per-sample failures are recorded without aborting the batch.
std::vector<PrelabelOutcome> prelabel(const std::vector<RemQuery>& queries,
                                      const std::vector<AnnotatedSample>& fewshot,
                                      gateway::ChatBackend& backend,
                                      const RuleScoreOptions& options = {});

struct TrainingLine {
  std::string prompt;
  std::string completion;
  std::string loss_boundary;
};

// Line-delimited JSON export for an external trainer; the prompt ends at the
// "Assistant" boundary so prompt tokens can be masked out of the loss.
void export_training_file(const std::vector<AnnotatedSample>& samples,
                          const std::filesystem::path& path);

std::vector<TrainingLine> read_training_file(const std::filesystem::path& path);

struct Agreement {
  double exact = 0.0;  // percent pred == gold
  double fuzzy = 0.0;  // percent |pred - gold| < 2 (no 0<->2 confusion)
};

Agreement agreement_metrics(const std::vector<int>& preds, const std::vector<int>& golds);

}  // namespace flowpref::rem
