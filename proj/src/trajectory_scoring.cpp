#include "flowpref/trajectory_scoring.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace flowpref::scoring {

using nlohmann::json;

StateValue state_value_from_scores(const rules::RuleGraph& graph,
                                   const rules::RuleScores& per_rule_scores,
                                   const rules::ScoreParams& params) {
  StateValue value;
  for (const auto& r : graph.rules()) {
    auto it = per_rule_scores.find(r.id);
    if (it == per_rule_scores.end()) {
      throw rules::IncompleteEvaluationError("no score for rule " + r.id);
    }
    value.per_rule[r.id] = it->second;
  }
  double total = 0.0;
  for (const auto& r : graph.rules()) {
    double weight = rules::rule_weight(graph, r.id, value.per_rule, params);
    value.per_rule_weight[r.id] = weight;
    total += weight * value.per_rule.at(r.id);
  }
  value.total = total;
  return value;
}

std::optional<double> RemScoreCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void RemScoreCache::put(const std::string& key, double value) {
  std::lock_guard lock(mu_);
  values_[key] = value;
}

std::size_t RemScoreCache::size() const {
  std::lock_guard lock(mu_);
  return values_.size();
}

std::string RemScoreCache::key_for(std::span<const corpus::Turn> prefix, const std::string& rule_id,
                                   const std::string& backend_id) {
  std::string serialized;
  for (const auto& turn : prefix) {
    serialized += corpus::speaker_name(turn.speaker);
    serialized += '\x1f';
    serialized += turn.text;
    serialized += '\x1e';
  }
  return to_hex(fnv1a64(serialized)) + "/" + rule_id + "/" + backend_id;
}

StateValue state_value(std::span<const corpus::Turn> prefix, const rules::RuleGraph& graph,
                       const rules::ScoreParams& params, gateway::ChatBackend& backend,
                       RemScoreCache* cache, const rem::RuleScoreOptions& options) {
  if (prefix.empty() || prefix.back().speaker != corpus::Speaker::Doctor) {
    throw std::invalid_argument("state value prefix must end with a doctor turn");
  }
  rules::RuleScores scores;
  for (const auto& r : graph.rules()) {
    std::string key;
    if (cache) {
      key = RemScoreCache::key_for(prefix, r.id, backend.id());
      if (auto hit = cache->get(key)) {
        scores[r.id] = *hit;
        continue;
      }
    }
    rem::RemQuery query{r, {prefix.begin(), prefix.end()}};
    double score = rem::rule_score(query, params.k, backend, options);
    scores[r.id] = score;
    if (cache) cache->put(key, score);
  }
  return state_value_from_scores(graph, scores, params);
}

double discounted_total(double immediate, std::span<const double> future_totals, double d) {
  double total = immediate;
  double factor = 1.0;
  for (double future : future_totals) {
    factor *= d;
    total += factor * future;
  }
  return total;
}

json candidate_score_to_json(const CandidateScore& score) {
  return json{{"record_id", score.record_id},
              {"immediate",
               {{"per_rule", score.immediate.per_rule},
                {"per_rule_weight", score.immediate.per_rule_weight},
                {"total", score.immediate.total}}},
              {"future_totals", score.future_totals},
              {"discounted_total", score.discounted_total},
              {"horizon_used", score.horizon_used}};
}

CandidateScore candidate_score_from_json(const json& value) {
  CandidateScore score;
  score.record_id = value.at("record_id").get<std::string>();
  const auto& immediate = value.at("immediate");
  score.immediate.per_rule = immediate.at("per_rule").get<std::map<std::string, double>>();
  score.immediate.per_rule_weight =
      immediate.at("per_rule_weight").get<std::map<std::string, double>>();
  score.immediate.total = immediate.at("total").get<double>();
  score.future_totals = value.at("future_totals").get<std::vector<double>>();
  score.discounted_total = value.at("discounted_total").get<double>();
  score.horizon_used = value.at("horizon_used").get<int>();
  return score;
}

CandidateScore candidate_score(const corpus::SplitRecord& record, const rules::RuleGraph& graph,
                               const rules::ScoreParams& params, gateway::ChatBackend& backend,
                               RemScoreCache* cache, const rem::RuleScoreOptions& options) {
  if (record.candidate.speaker != corpus::Speaker::Doctor) {
    throw std::invalid_argument("candidate turn must be a doctor turn");
  }
  std::vector<corpus::Turn> prefix = record.history;
  prefix.push_back(record.candidate);

  CandidateScore score;
  score.record_id = record.id;
  score.immediate = state_value(prefix, graph, params, backend, cache, options);

  const int horizon = std::min<int>(params.n, static_cast<int>(record.future.size()));
  score.horizon_used = horizon;
  for (int i = 0; i < horizon; ++i) {
    prefix.push_back(record.future[static_cast<std::size_t>(i)].patient);
    prefix.push_back(record.future[static_cast<std::size_t>(i)].doctor);
    score.future_totals.push_back(
        state_value(prefix, graph, params, backend, cache, options).total);
  }
  score.discounted_total = discounted_total(score.immediate.total, score.future_totals, params.d);
  return score;
}

namespace {

std::map<std::string, CandidateScore> load_checkpoint(const std::filesystem::path& path) {
  std::map<std::string, CandidateScore> completed;
  if (path.empty() || !std::filesystem::exists(path)) return completed;
  std::ifstream in(path);
  if (!in) throw ResumeError("cannot open checkpoint: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      CandidateScore score = candidate_score_from_json(json::parse(line));
      completed[score.record_id] = std::move(score);
    } catch (const std::exception& e) {
      throw ResumeError("corrupted checkpoint line " + std::to_string(line_no) + " in " +
                        path.string() + ": " + e.what());
    }
  }
  return completed;
}

}  // namespace

ScoredBatch score_batch(std::span<const corpus::SplitRecord> records, const rules::RuleGraph& graph,
                        const rules::ScoreParams& params, gateway::ChatBackend& backend,
                        const std::filesystem::path& checkpoint_path, RemScoreCache* cache,
                        int workers, const rem::RuleScoreOptions& options) {
  if (records.empty()) throw std::invalid_argument("no records to score");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");

  auto completed = load_checkpoint(checkpoint_path);

  std::ofstream checkpoint_out;
  std::mutex checkpoint_mu;
  if (!checkpoint_path.empty()) {
    if (checkpoint_path.has_parent_path()) {
      std::filesystem::create_directories(checkpoint_path.parent_path());
    }
    checkpoint_out.open(checkpoint_path, std::ios::app);
    if (!checkpoint_out) throw ResumeError("cannot open checkpoint for append: " + checkpoint_path.string());
  }

  std::vector<std::optional<CandidateScore>> slots(records.size());
  std::vector<std::optional<BatchFailure>> failures(records.size());

  auto process = [&](std::size_t index) {
    const auto& record = records[index];
    if (auto it = completed.find(record.id); it != completed.end()) {
      slots[index] = it->second;
      return;
    }
    try {
      CandidateScore score = candidate_score(record, graph, params, backend, cache, options);
      if (checkpoint_out.is_open()) {
        std::lock_guard lock(checkpoint_mu);
        checkpoint_out << candidate_score_to_json(score).dump() << '\n';
        checkpoint_out.flush();
      }
      slots[index] = std::move(score);
    } catch (const std::exception& e) {
      failures[index] = BatchFailure{index, record.id, e.what()};
    }
  };

  if (workers == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
          process(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  ScoredBatch batch;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (slots[i]) batch.scores.push_back(std::move(*slots[i]));
    if (failures[i]) batch.failures.push_back(std::move(*failures[i]));
  }
  return batch;
}

}  // namespace flowpref::scoring
