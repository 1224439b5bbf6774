#include "flowpref/preference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace flowpref::prefs {

using nlohmann::json;

std::string label_name(Label label) {
  switch (label) {
    case Label::AWins: return "a_wins";
    case Label::BWins: return "b_wins";
    case Label::Tie: return "tie";
  }
  return "tie";
}

Label classify(double score_a, double score_b, double tie_threshold) {
  if (!std::isfinite(score_a) || !std::isfinite(score_b)) {
    throw std::invalid_argument("scores must be finite");
  }
  if (std::abs(score_a - score_b) < tie_threshold) return Label::Tie;
  return score_a > score_b ? Label::AWins : Label::BWins;
}

PreferencePair make_pair(std::string id, std::vector<corpus::Turn> history, Candidate a, Candidate b,
                         scoring::CandidateScore score_a, scoring::CandidateScore score_b,
                         double tie_threshold) {
  PreferencePair pair;
  pair.id = std::move(id);
  pair.history = std::move(history);
  pair.a = std::move(a);
  pair.b = std::move(b);
  pair.gap = std::abs(score_a.discounted_total - score_b.discounted_total);
  pair.label = classify(score_a.discounted_total, score_b.discounted_total, tie_threshold);
  pair.score_a = std::move(score_a);
  pair.score_b = std::move(score_b);
  return pair;
}

std::vector<PreferencePair> select_pairs(std::vector<PreferencePair> pairs, std::size_t budget,
                                         const WarningSink& warn) {
  pairs.erase(std::remove_if(pairs.begin(), pairs.end(),
                             [](const PreferencePair& p) { return p.label == Label::Tie; }),
              pairs.end());
  std::stable_sort(pairs.begin(), pairs.end(), [](const PreferencePair& x, const PreferencePair& y) {
    if (x.gap != y.gap) return x.gap > y.gap;
    return x.id < y.id;
  });
  if (pairs.size() > budget) {
    pairs.resize(budget);
  } else if (pairs.size() < budget) {
    warn("selected " + std::to_string(pairs.size()) + " pairs, below the budget of " +
         std::to_string(budget));
  }
  return pairs;
}

ProvenanceStats provenance_stats(const std::vector<PreferencePair>& selected) {
  if (selected.empty()) throw std::invalid_argument("no pairs for provenance stats");
  ProvenanceStats stats;
  for (const auto& pair : selected) {
    if (pair.label == Label::Tie) continue;
    const Candidate& winner = pair.label == Label::AWins ? pair.a : pair.b;
    if (winner.provenance == corpus::Source::Sampled) ++stats.sampled_wins;
    else ++stats.predicted_wins;
  }
  stats.ratio = stats.predicted_wins == 0
                    ? std::numeric_limits<double>::infinity()
                    : static_cast<double>(stats.sampled_wins) / static_cast<double>(stats.predicted_wins);
  return stats;
}

void export_dpo(const std::vector<PreferencePair>& selected, const std::filesystem::path& path,
                const TrainingMeta& meta, const corpus::SpeakerLabels& labels) {
  if (selected.empty()) throw std::invalid_argument("no pairs to export");
  std::ostringstream out;
  for (const auto& pair : selected) {
    if (pair.label == Label::Tie) {
      throw std::logic_error("tie pair " + pair.id + " reached export");
    }
    const Candidate& chosen = pair.label == Label::AWins ? pair.a : pair.b;
    const Candidate& rejected = pair.label == Label::AWins ? pair.b : pair.a;
    if (chosen.text == rejected.text) {
      throw std::logic_error("pair " + pair.id + " has identical chosen and rejected texts");
    }
    json metadata{{"gap", pair.gap},
                  {"chosen_provenance", corpus::source_name(chosen.provenance)},
                  {"rejected_provenance", corpus::source_name(rejected.provenance)},
                  {"pair_id", pair.id}};
    json line{{"prompt", corpus::serialize_turns(pair.history, labels)},
              {"chosen", chosen.text},
              {"rejected", rejected.text},
              {"metadata", std::move(metadata)}};
    out << line.dump() << '\n';
  }
  write_text_file(path, out.str());

  json params{{"alpha", meta.params.alpha}, {"beta", meta.params.beta},
              {"gamma", meta.params.gamma}, {"t1", meta.params.t1},
              {"t2", meta.params.t2},       {"d", meta.params.d},
              {"k", meta.params.k},         {"n", meta.params.n}};
  json sidecar{{"score_params", std::move(params)},
               {"trainer", meta.trainer},
               {"pair_count", selected.size()}};
  std::filesystem::path sidecar_path = path;
  sidecar_path += ".meta.json";
  write_text_file(sidecar_path, sidecar.dump(2) + "\n");
}

std::vector<DpoRecord> read_dpo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preference file: " + path.string());
  std::vector<DpoRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json value = json::parse(line);
    records.push_back({value.at("prompt").get<std::string>(), value.at("chosen").get<std::string>(),
                       value.at("rejected").get<std::string>(), value.at("metadata")});
  }
  return records;
}

double dpo_loss(double logp_chosen, double logp_rejected, double logp_sft_chosen,
                double logp_sft_rejected, double lambda) {
  if (!std::isfinite(logp_chosen) || !std::isfinite(logp_rejected) ||
      !std::isfinite(logp_sft_chosen) || !std::isfinite(logp_sft_rejected)) {
    throw std::invalid_argument("log-probabilities must be finite");
  }
  if (lambda <= 0.0 || lambda >= 1.0) throw std::invalid_argument("lambda must be in (0,1)");
  const double margin = lambda * ((logp_chosen + logp_sft_rejected) - (logp_sft_chosen + logp_rejected));
  // -log sigmoid(z) via log1p for stability on both tails.
  return margin >= 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

}  // namespace flowpref::prefs
