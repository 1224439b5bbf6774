#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "flowpref/corpus.hpp"
#include "flowpref/gateway.hpp"
#include "flowpref/rem_eval.hpp"
#include "flowpref/rule_graph.hpp"

namespace flowpref::scoring {

// Weighted rule-score summary of one dialogue prefix.
struct StateValue {
  std::map<std::string, double> per_rule;         // averaged evaluator score, [0,2]
  std::map<std::string, double> per_rule_weight;  // gamma or threshold product
  double total = 0.0;
};

// Pure combination step: weights from the graph shape and the given scores,
// total = sum of weight * score over every rule in declaration order.
StateValue state_value_from_scores(const rules::RuleGraph& graph,
                                   const rules::RuleScores& per_rule_scores,
                                   const rules::ScoreParams& params);

// Cross-candidate cache for evaluator scores, keyed by
// (prefix hash, rule id, backend id). Thread-safe.
class RemScoreCache {
 public:
  std::optional<double> get(const std::string& key) const;
  void put(const std::string& key, double value);
  std::size_t size() const;

  static std::string key_for(std::span<const corpus::Turn> prefix, const std::string& rule_id,
                             const std::string& backend_id);

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> values_;
};

// Evaluates every rule of the graph against the prefix (which must end with
// a doctor turn) with k repetitions each, then combines.
StateValue state_value(std::span<const corpus::Turn> prefix, const rules::RuleGraph& graph,
                       const rules::ScoreParams& params, gateway::ChatBackend& backend,
                       RemScoreCache* cache = nullptr,
                       const rem::RuleScoreOptions& options = {});

struct CandidateScore {
  std::string record_id;
  StateValue immediate;                // value of (history, candidate)
  std::vector<double> future_totals;   // value of each extended prefix
  double discounted_total = 0.0;
  int horizon_used = 0;
};

nlohmann::json candidate_score_to_json(const CandidateScore& score);
CandidateScore candidate_score_from_json(const nlohmann::json& value);

// Discounted combination: immediate + sum_i d^i * future[i].
double discounted_total(double immediate, std::span<const double> future_totals, double d);

// Scores one split record: the immediate state plus one state per future
// round, up to min(params.n, available rounds).
CandidateScore candidate_score(const corpus::SplitRecord& record, const rules::RuleGraph& graph,
                               const rules::ScoreParams& params, gateway::ChatBackend& backend,
                               RemScoreCache* cache = nullptr,
                               const rem::RuleScoreOptions& options = {});

struct BatchFailure {
  std::size_t index = 0;
  std::string record_id;
  std::string message;
};

struct ScoredBatch {
  std::vector<CandidateScore> scores;  // successful records, input order
  std::vector<BatchFailure> failures;
};

struct ResumeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scores records in input order, appending each completed score to the
// checkpoint file so an interrupted batch resumes without re-querying the
// backend. A corrupted checkpoint line raises ResumeError.
ScoredBatch score_batch(std::span<const corpus::SplitRecord> records, const rules::RuleGraph& graph,
                        const rules::ScoreParams& params, gateway::ChatBackend& backend,
                        const std::filesystem::path& checkpoint_path,
                        RemScoreCache* cache = nullptr, int workers = 1,
                        const rem::RuleScoreOptions& options = {});

}  // namespace flowpref::scoring
