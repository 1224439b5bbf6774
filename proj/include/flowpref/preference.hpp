#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowpref/corpus.hpp"
#include "flowpref/rule_graph.hpp"
#include "flowpref/trajectory_scoring.hpp"
#include "flowpref/util.hpp"

namespace flowpref::prefs {

enum class Label { AWins, BWins, Tie };

std::string label_name(Label label);

struct Candidate {
  std::string text;
  corpus::Source provenance = corpus::Source::Sampled;
};

struct PreferencePair {
  std::string id;
  std::vector<corpus::Turn> history;
  Candidate a;
  Candidate b;
  scoring::CandidateScore score_a;
  scoring::CandidateScore score_b;
  double gap = 0.0;
  Label label = Label::Tie;
};

// Tie when |a - b| < threshold; a gap of exactly the threshold is decisive.
Label classify(double score_a, double score_b, double tie_threshold = 1.0);

PreferencePair make_pair(std::string id, std::vector<corpus::Turn> history, Candidate a, Candidate b,
                         scoring::CandidateScore score_a, scoring::CandidateScore score_b,
                         double tie_threshold = 1.0);

// Drops ties, sorts by gap descending (stable, id ascending as tie-break)
// and keeps at most `budget` pairs. Returning fewer than the budget warns.
std::vector<PreferencePair> select_pairs(std::vector<PreferencePair> pairs, std::size_t budget,
                                         const WarningSink& warn = null_warning_sink());

struct ProvenanceStats {
  std::size_t sampled_wins = 0;
  std::size_t predicted_wins = 0;
  double ratio = 0.0;  // sampled : predicted; +inf when predicted_wins == 0
};

ProvenanceStats provenance_stats(const std::vector<PreferencePair>& selected);

struct DpoRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  nlohmann::json metadata;
};

struct TrainingMeta {
  rules::ScoreParams params;
  nlohmann::json trainer;  // hyperparameters passed through verbatim
};

// Line-delimited JSON export plus a "<path>.meta.json" sidecar carrying the
// scoring parameters and trainer hyperparameters. Tie pairs are rejected.
void export_dpo(const std::vector<PreferencePair>& selected, const std::filesystem::path& path,
                const TrainingMeta& meta,
                const corpus::SpeakerLabels& labels = corpus::SpeakerLabels::defaults());

std::vector<DpoRecord> read_dpo(const std::filesystem::path& path);

// Pairwise preference objective for one example, evaluated numerically:
//   -log sigmoid(lambda * ((logp_c + logp_sft_r) - (logp_sft_c + logp_r)))
double dpo_loss(double logp_chosen, double logp_rejected, double logp_sft_chosen,
                double logp_sft_rejected, double lambda);

}  // namespace flowpref::prefs
