// Acceptance suite: exact-formula and property-based checks for the whole
// pipeline, runnable offline against the deterministic mock backends.
// Each criterion prints one PASS/FAIL line; the process exits non-zero if
// any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowpref/checklist.hpp"
#include "flowpref/corpus.hpp"
#include "flowpref/gateway.hpp"
#include "flowpref/metrics.hpp"
#include "flowpref/pipeline.hpp"
#include "flowpref/preference.hpp"
#include "flowpref/rem_eval.hpp"
#include "flowpref/rule_graph.hpp"
#include "flowpref/sp_simulator.hpp"
#include "flowpref/trajectory_scoring.hpp"
#include "flowpref/util.hpp"

using namespace flowpref;
using nlohmann::json;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

void report(int criterion, const std::string& name, bool passed, const std::string& detail = "") {
  std::printf("[%s] C%d: %s%s%s\n", passed ? "PASS" : "FAIL", criterion, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  if (!passed) ++g_failures;
}

bool expect(bool condition, const std::string& note) {
  if (!condition) g_notes.push_back(note);
  return condition;
}

std::string drain_notes() {
  std::string joined;
  for (const auto& note : g_notes) {
    if (!joined.empty()) joined += "; ";
    joined += note;
  }
  g_notes.clear();
  return joined;
}

struct ScratchDir {
  std::filesystem::path path;
  explicit ScratchDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("flowpref_acceptance_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// ---------------------------------------------------------------------------
// C1: weighting/summation equivalence against an independent transcription
// ---------------------------------------------------------------------------

// Direct, hand-written transcription of the scoring equations for the
// default six-rule graph: chain A -> B -> C; D constrains B and C; E and F
// constrain every goal. Kept deliberately independent of the library code.
double c1_oracle_total(double va, double vb, double vc, double vd, double ve, double vf,
                       const rules::ScoreParams& p) {
  auto vfn = [](double x, double t, double y) { return x >= t ? 1.0 : y; };
  double wa = 1.0;
  wa *= vfn(ve, p.t2, p.beta);
  wa *= vfn(vf, p.t2, p.beta);
  double wb = 1.0;
  wb *= vfn(va, p.t1, p.alpha);
  wb *= vfn(vd, p.t2, p.beta);
  wb *= vfn(ve, p.t2, p.beta);
  wb *= vfn(vf, p.t2, p.beta);
  double wc = 1.0;
  wc *= vfn(vb, p.t1, p.alpha);
  wc *= vfn(vd, p.t2, p.beta);
  wc *= vfn(ve, p.t2, p.beta);
  wc *= vfn(vf, p.t2, p.beta);
  double total = 0.0;
  total += wa * va;
  total += wb * vb;
  total += wc * vc;
  total += p.gamma * vd;
  total += p.gamma * ve;
  total += p.gamma * vf;
  return total;
}

void criterion1() {
  auto graph = rules::default_graph();
  rules::ScoreParams params;  // 0.1, 0.8, 0.1, thresholds 1.0/1.0, d 0.65, k 5
  auto started = std::chrono::steady_clock::now();

  bool ok = true;
  std::size_t checked = 0;
  for (int va = 0; va <= 2; ++va)
    for (int vb = 0; vb <= 2; ++vb)
      for (int vc = 0; vc <= 2; ++vc)
        for (int vd = 0; vd <= 2; ++vd)
          for (int ve = 0; ve <= 2; ++ve)
            for (int vf = 0; vf <= 2; ++vf) {
              rules::RuleScores scores{{"A", double(va)}, {"B", double(vb)}, {"C", double(vc)},
                                       {"D", double(vd)}, {"E", double(ve)}, {"F", double(vf)}};
              double got = scoring::state_value_from_scores(graph, scores, params).total;
              double want = c1_oracle_total(va, vb, vc, vd, ve, vf, params);
              if (got != want) {  // zero tolerance
                ok = expect(false, "mismatch at (" + std::to_string(va) + "," + std::to_string(vb) +
                                       "," + std::to_string(vc) + "," + std::to_string(vd) + "," +
                                       std::to_string(ve) + "," + std::to_string(vf) + "): got " +
                                       std::to_string(got) + " want " + std::to_string(want));
              }
              ++checked;
            }
  auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  ok = expect(checked == 729, "expected 729 assignments") && ok;
  ok = expect(elapsed.count() < 5000, "runtime " + std::to_string(elapsed.count()) + "ms") && ok;
  report(1, "state-value equivalence over all 3^6 integer score assignments (exact, <5s)", ok,
         ok ? std::to_string(checked) + " assignments in " + std::to_string(elapsed.count()) + "ms"
            : drain_notes());
}

// ---------------------------------------------------------------------------
// C2: discounted candidate score against a direct summation oracle
// ---------------------------------------------------------------------------

void criterion2() {
  bool ok = true;

  std::vector<double> future{1.2, 0.9};
  double worked = scoring::discounted_total(1.5, future, 0.65);
  ok = expect(std::fabs(worked - 2.66025) <= 1e-12,
              "worked example gave " + std::to_string(worked)) && ok;

  std::uint64_t state = 2024;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    state = splitmix64(state);
    double immediate = 8.0 * unit_double_from_bits(state) - 2.0;
    state = splitmix64(state);
    std::size_t horizon = state % 8;
    std::vector<double> totals;
    for (std::size_t i = 0; i < horizon; ++i) {
      state = splitmix64(state);
      totals.push_back(8.0 * unit_double_from_bits(state) - 2.0);
    }
    state = splitmix64(state);
    double d = 0.05 + 0.95 * unit_double_from_bits(state);

    double oracle = immediate;
    for (std::size_t i = 0; i < totals.size(); ++i) {
      oracle += std::pow(d, static_cast<double>(i + 1)) * totals[i];
    }
    double got = scoring::discounted_total(immediate, totals, d);
    ok = expect(std::fabs(got - oracle) <= 1e-12,
                "trial " + std::to_string(trial) + ": |" + std::to_string(got) + " - " +
                    std::to_string(oracle) + "| > 1e-12") && ok;
  }
  report(2, "discounted score matches the direct summation oracle (worked example + 1000 random)",
         ok, drain_notes());
}

// ---------------------------------------------------------------------------
// C3: preference objective checks
// ---------------------------------------------------------------------------

void criterion3() {
  bool ok = true;
  double identity = prefs::dpo_loss(-5.0, -9.0, -5.0, -9.0, 0.3);
  ok = expect(std::fabs(identity - std::log(2.0)) <= 1e-9,
              "identity case gave " + std::to_string(identity)) && ok;

  double worked = prefs::dpo_loss(-10.0, -12.0, -10.0, -11.0, 0.1);
  ok = expect(std::fabs(worked - 0.644397) <= 1e-6,
              "worked example gave " + std::to_string(worked)) && ok;

  std::uint64_t state = 7;
  for (int trial = 0; trial < 10000 && ok; ++trial) {
    auto draw = [&] {
      state = splitmix64(state);
      return -30.0 * unit_double_from_bits(state);
    };
    double c = draw(), r = draw(), sc = draw(), sr = draw();
    state = splitmix64(state);
    double lambda = 0.02 + 0.96 * unit_double_from_bits(state);
    double base = prefs::dpo_loss(c, r, sc, sr, lambda);
    double improved = prefs::dpo_loss(c + 0.25, r, sc, sr, lambda);
    ok = expect(base > 0.0, "loss not positive at trial " + std::to_string(trial)) && ok;
    ok = expect(improved < base, "not strictly decreasing at trial " + std::to_string(trial)) && ok;
  }
  report(3, "preference objective: identity ln2, worked example, monotone over 10k tuples", ok,
         drain_notes());
}

// ---------------------------------------------------------------------------
// C4: preference construction
// ---------------------------------------------------------------------------

void criterion4() {
  bool ok = true;
  ok = expect(prefs::classify(3.0, 2.0000000001) == prefs::Label::Tie,
              "gap just under 1.0 must tie") && ok;
  ok = expect(prefs::classify(2.0, 3.0 - 1e-13) == prefs::Label::Tie,
              "gap 0.999... must tie") && ok;
  ok = expect(prefs::classify(3.0, 2.0) == prefs::Label::AWins, "gap exactly 1.0 must decide") && ok;
  ok = expect(prefs::classify(2.0, 3.0) == prefs::Label::BWins, "loser side must mirror") && ok;

  // Selection matches an independently coded sort oracle on 10k random pairs.
  std::uint64_t state = 99;
  std::vector<prefs::PreferencePair> pairs;
  for (int i = 0; i < 10000; ++i) {
    state = splitmix64(state);
    double a = 12.0 * unit_double_from_bits(state);
    state = splitmix64(state);
    double b = 12.0 * unit_double_from_bits(state);
    scoring::CandidateScore sa, sb;
    sa.discounted_total = a;
    sb.discounted_total = b;
    char id[16];
    std::snprintf(id, sizeof(id), "p%05d", i);
    pairs.push_back(prefs::make_pair(id, {{corpus::Speaker::Patient, "h " + std::string(id)}},
                                     {"sampled " + std::string(id), corpus::Source::Sampled},
                                     {"predicted " + std::string(id), corpus::Source::Predicted},
                                     sa, sb, 1.0));
  }

  const std::size_t budget = 2000;
  auto selected = prefs::select_pairs(pairs, budget);

  struct OracleRow {
    double gap;
    std::string id;
  };
  std::vector<OracleRow> oracle;
  for (const auto& pair : pairs) {
    double gap = std::fabs(pair.score_a.discounted_total - pair.score_b.discounted_total);
    if (gap < 1.0) continue;  // ties discarded
    oracle.push_back({gap, pair.id});
  }
  std::sort(oracle.begin(), oracle.end(), [](const OracleRow& x, const OracleRow& y) {
    if (x.gap != y.gap) return x.gap > y.gap;
    return x.id < y.id;
  });
  if (oracle.size() > budget) oracle.resize(budget);

  ok = expect(selected.size() == oracle.size(),
              "selection size " + std::to_string(selected.size()) + " vs oracle " +
                  std::to_string(oracle.size())) && ok;
  for (std::size_t i = 0; ok && i < selected.size(); ++i) {
    ok = expect(selected[i].id == oracle[i].id && selected[i].gap == oracle[i].gap,
                "selection diverges from the sort oracle at rank " + std::to_string(i));
  }

  // Exported file has no tie records.
  ScratchDir dir("c4");
  prefs::TrainingMeta meta;
  meta.trainer = json{{"lora_alpha", 16}, {"lora_r", 64}, {"lambda", nullptr}};
  prefs::export_dpo(selected, dir.path / "dpo.jsonl", meta);
  auto records = prefs::read_dpo(dir.path / "dpo.jsonl");
  ok = expect(records.size() == selected.size(), "export line count") && ok;
  for (const auto& record : records) {
    if (!expect(record.metadata.at("gap").get<double>() >= 1.0, "tie leaked into the export")) {
      ok = false;
      break;
    }
    if (!expect(record.chosen != record.rejected, "chosen == rejected in export")) {
      ok = false;
      break;
    }
  }
  report(4, "tie threshold at 1.0, top-2k selection matches the sort oracle, no tie exports", ok,
         drain_notes());
}

// ---------------------------------------------------------------------------
// C5: simulator fixtures
// ---------------------------------------------------------------------------

void write_case_bundle(const std::filesystem::path& dir, const std::string& department, int seed) {
  std::filesystem::create_directories(dir);
  std::string info;
  std::uint64_t state = seed;
  for (int i = 0; i < 40; ++i) {
    state = splitmix64(state);
    info += "finding" + std::to_string(state % 1000) + " ";
  }
  write_text_file(dir / "info.txt", info);
  std::string script;
  for (int i = 0; i < 6; ++i) {
    json line{{"question", "Scripted question " + std::to_string(i) + " for case " +
                               dir.filename().string() + "?"},
              {"answer", "Scripted answer " + std::to_string(i) + " with specifics."}};
    script += line.dump() + "\n";
  }
  write_text_file(dir / "script.jsonl", script);
  json checklist{{"department", department},
                 {"symptoms", {"sym1", "sym2", "sym3"}},
                 {"tests", {"test1", "test2"}},
                 {"diseases", {"disease1"}}};
  write_text_file(dir / "checklist.json", checklist.dump());
}

// Scripted patient for session fuzzing: emits the end marker at a chosen
// round, or never.
class FuzzPatientBackend : public gateway::ChatBackend {
 public:
  explicit FuzzPatientBackend(int marker_round) : marker_round_(marker_round) {}
  std::string chat(const gateway::ChatRequest&) override {
    ++round_;
    if (round_ == marker_round_) return "That is all I needed. (End of Conversation)";
    return "Round " + std::to_string(round_) + " patient answer.";
  }
  std::string id() const override { return "fuzz-patient"; }

 private:
  int marker_round_;
  int round_ = 0;
};

void criterion5() {
  bool ok = true;
  ScratchDir dir("c5");

  // 72 cases across 5 departments, mirroring the reference dataset split.
  const std::vector<std::pair<std::string, int>> departments{{"Internal Medicine", 23},
                                                             {"Surgery", 23},
                                                             {"Gynecology", 8},
                                                             {"Pediatrics", 10},
                                                             {"Psychiatry", 8}};
  int case_number = 0;
  for (const auto& [department, count] : departments) {
    for (int i = 0; i < count; ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "case%02d", case_number);
      write_case_bundle(dir.path / "cases" / name, department, case_number);
      ++case_number;
    }
  }
  ok = expect(case_number == 72, "expected 72 cases") && ok;

  gateway::HashEmbeddingBackend embedder(16, 11);
  spsim::ChunkingOptions chunking;
  std::size_t total_chunks = 0;
  std::vector<spsim::CaseIndex> indices;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path / "cases")) {
    auto index = spsim::ingest_case(entry.path(), embedder);
    for (const auto& chunk : index.chunks) {
      if (chunking.counter(chunk.text) > 128) {
        ok = expect(false, "chunk over 128 tokens in " + index.patient.id);
        break;
      }
    }
    total_chunks += index.chunks.size();
    indices.push_back(std::move(index));
  }
  ok = expect(indices.size() == 72, "failed to ingest all 72 cases") && ok;

  // Retrieval equals a brute-force cosine scan on randomized indices.
  std::uint64_t state = 5;
  for (int trial = 0; trial < 20 && ok; ++trial) {
    state = splitmix64(state);
    const auto& index = indices[state % indices.size()];
    std::string query = "probe question " + std::to_string(trial) + " about findings";
    auto got = spsim::retrieve(index, query, embedder, 4);

    auto query_vec = embedder.embed({query}).front();
    std::vector<std::pair<double, int>> oracle;
    for (const auto& chunk : index.chunks) {
      oracle.emplace_back(spsim::cosine_similarity(query_vec.values, chunk.embedding.values),
                          chunk.id);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second < y.second;
    });
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].id != oracle[i].second) {
        ok = expect(false, "retrieval differs from brute force at rank " + std::to_string(i));
        break;
      }
    }
  }

  // 1000 fuzzed sessions: never more than 5 rounds; marker always terminates
  // within its round.
  std::size_t end_marker_sessions = 0;
  for (int session = 0; session < 1000 && ok; ++session) {
    state = splitmix64(state);
    const auto& index = indices[state % indices.size()];
    state = splitmix64(state);
    int marker_round = 1 + static_cast<int>(state % 8);  // 6..8 means never within the cap
    gateway::ScriptedChatBackend doctor_backend({}, "Can you describe the symptom further?");
    FuzzPatientBackend patient_backend(marker_round);
    auto transcript = spsim::run_session(index, doctor_backend, patient_backend, embedder);
    if (transcript.rounds.size() > 5) {
      ok = expect(false, "session exceeded 5 rounds");
      break;
    }
    if (marker_round <= 5) {
      ++end_marker_sessions;
      if (transcript.terminated_by != spsim::TerminatedBy::EndMarker ||
          transcript.rounds.size() != static_cast<std::size_t>(marker_round)) {
        ok = expect(false, "end marker did not terminate in round " + std::to_string(marker_round));
        break;
      }
    } else if (transcript.terminated_by != spsim::TerminatedBy::RoundCap ||
               transcript.rounds.size() != 5) {
      ok = expect(false, "round cap not applied");
      break;
    }
  }
  ok = expect(end_marker_sessions > 0, "fuzz never exercised the end marker") && ok;

  report(5, "simulator: 72-case chunk budget, brute-force retrieval match, 1000 capped sessions", ok,
         ok ? std::to_string(total_chunks) + " chunks, " + std::to_string(end_marker_sessions) +
                  " marker terminations"
            : drain_notes());
}

// ---------------------------------------------------------------------------
// C6: checklist scoring
// ---------------------------------------------------------------------------

void criterion6() {
  bool ok = true;

  // Two-case worked example: symptom fractions 2/7 and 3/8.
  {
    std::vector<checklist::CaseFractions> fractions{{"c1", 2.0 / 7.0, 0.0, 0.0},
                                                    {"c2", 3.0 / 8.0, 0.0, 0.0}};
    auto report_data =
        checklist::aggregate(fractions, {{"c1", "Internal Medicine"}, {"c2", "Internal Medicine"}});
    ok = expect(std::fabs(report_data.overall.symptoms - 33.0) <= 0.05,
                "two-case example gave " + std::to_string(report_data.overall.symptoms)) && ok;
  }

  // The >=4 disease rule zeroes the category.
  {
    checklist::Checklist reference;
    reference.symptoms = {"s1"};
    reference.tests = {"t1"};
    reference.diseases = {"d1", "d2"};
    checklist::PassAnnotation annotation;
    annotation.case_id = "hedger";
    annotation.symptom_marks = {1.0};
    annotation.test_marks = {1.0};
    annotation.disease_marks = {1.0, 1.0};
    annotation.diagnosed_disease_count = 4;
    auto fractions = checklist::score_case(annotation, reference);
    ok = expect(fractions.diseases == 0.0, "four candidate diseases must zero the score") && ok;
    annotation.diagnosed_disease_count = 3;
    ok = expect(checklist::score_case(annotation, reference).diseases == 1.0,
                "three candidate diseases must keep the score") && ok;
  }

  // Annotator averaging: item-level equals score-level, random fixtures.
  std::uint64_t state = 404;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    state = splitmix64(state);
    const std::size_t items = 1 + state % 9;
    state = splitmix64(state);
    const std::size_t annotators = 2 + state % 4;

    checklist::Checklist reference;
    for (std::size_t i = 0; i < items; ++i) reference.symptoms.push_back("s" + std::to_string(i));
    reference.tests = {"t"};
    reference.diseases = {"d"};

    std::vector<std::vector<double>> marks(annotators, std::vector<double>(items, 0.0));
    std::vector<double> averaged(items, 0.0);
    for (std::size_t item = 0; item < items; ++item) {
      for (std::size_t annotator = 0; annotator < annotators; ++annotator) {
        state = splitmix64(state);
        marks[annotator][item] = (state % 2 == 0) ? 1.0 : 0.0;
        averaged[item] += marks[annotator][item];
      }
      averaged[item] /= static_cast<double>(annotators);
    }

    checklist::PassAnnotation merged;
    merged.case_id = "avg";
    merged.symptom_marks = averaged;
    merged.test_marks = {1.0};
    merged.disease_marks = {1.0};
    merged.diagnosed_disease_count = 1;
    double item_level = checklist::score_case(merged, reference).symptoms;

    double score_level = 0.0;
    for (std::size_t annotator = 0; annotator < annotators; ++annotator) {
      checklist::PassAnnotation single;
      single.case_id = "avg";
      single.symptom_marks = marks[annotator];
      single.test_marks = {1.0};
      single.disease_marks = {1.0};
      single.diagnosed_disease_count = 1;
      score_level += checklist::score_case(single, reference).symptoms;
    }
    score_level /= static_cast<double>(annotators);

    ok = expect(std::fabs(item_level - score_level) <= 1e-12,
                "averaging orders disagree at trial " + std::to_string(trial));
  }

  report(6, "checklist: 33.0 worked example, >=4-disease rule, averaging equivalence to 1e-12", ok,
         drain_notes());
}

// ---------------------------------------------------------------------------
// C7: implication distance
// ---------------------------------------------------------------------------

std::vector<metrics::ImplicationJudgment> judgments_of(std::size_t fully, std::size_t partially,
                                                       std::size_t not_implied) {
  std::vector<metrics::ImplicationJudgment> judgments;
  for (std::size_t i = 0; i < fully; ++i)
    judgments.push_back({metrics::Implication::Fully, "A"});
  for (std::size_t i = 0; i < partially; ++i)
    judgments.push_back({metrics::Implication::Partially, "B"});
  for (std::size_t i = 0; i < not_implied; ++i)
    judgments.push_back({metrics::Implication::Not, "C"});
  return judgments;
}

void criterion7() {
  bool ok = true;
  ok = expect(metrics::gpt_distance(judgments_of(25, 0, 0)) == 0.0, "all-fully must be exactly 0") && ok;
  ok = expect(metrics::gpt_distance(judgments_of(0, 0, 25)) == 2.0, "all-not must be exactly 2") && ok;
  ok = expect(metrics::gpt_distance(judgments_of(50, 100, 50)) == 1.0,
              "mixed fixture must be exactly 1.0") && ok;

  std::uint64_t state = 123;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    state = splitmix64(state);
    std::size_t fully = state % 30;
    state = splitmix64(state);
    std::size_t partially = state % 30;
    state = splitmix64(state);
    std::size_t not_implied = state % 30;
    if (partially + not_implied == 0) partially = 1;

    double base = metrics::gpt_distance(judgments_of(fully, partially, not_implied));
    state = splitmix64(state);
    bool flip_not = not_implied > 0 && (partially == 0 || state % 2 == 0);
    double flipped = flip_not
                         ? metrics::gpt_distance(judgments_of(fully, partially + 1, not_implied - 1))
                         : metrics::gpt_distance(judgments_of(fully + 1, partially - 1, not_implied));
    ok = expect(flipped < base, "flip did not strictly decrease at trial " + std::to_string(trial));
  }
  report(7, "implication distance: exact boundaries 0/2, mixed 1.0, monotone over 1000 flips", ok,
         drain_notes());
}

// ---------------------------------------------------------------------------
// C8: end-to-end determinism of score -> build-prefs, including replay
// ---------------------------------------------------------------------------

corpus::Dialogue fixture_dialogue(const std::string& id, int rounds, const std::string& flavor,
                                  std::uint64_t seed) {
  corpus::Dialogue dialogue;
  dialogue.id = id;
  std::uint64_t state = seed;
  for (int i = 0; i < rounds; ++i) {
    state = splitmix64(state);
    dialogue.turns.push_back({corpus::Speaker::Patient,
                              "complaint " + std::to_string(state % 997) + " (" + flavor + ")"});
    state = splitmix64(state);
    dialogue.turns.push_back({corpus::Speaker::Doctor,
                              "advice " + std::to_string(state % 997) + " (" + flavor + ")"});
  }
  return dialogue;
}

void criterion8() {
  bool ok = true;
  ScratchDir dir("c8");

  std::vector<corpus::Dialogue> sampled;
  std::vector<corpus::Dialogue> predicted;
  for (int i = 0; i < 50; ++i) {
    std::string id = "dlg" + std::to_string(i);
    sampled.push_back(fixture_dialogue(id, 4, "real", 1000 + i));
    auto alt = fixture_dialogue(id, 4, "model", 9000 + i);
    alt.source = corpus::Source::Predicted;
    predicted.push_back(std::move(alt));
  }
  corpus::save_dialogues(dir.path / "corpus.jsonl", sampled);
  corpus::save_dialogues(dir.path / "predicted.jsonl", predicted);

  json config_json{
      {"seed", 29},
      {"paths",
       {{"corpus", (dir.path / "corpus.jsonl").string()},
        {"predicted_corpus", (dir.path / "predicted.jsonl").string()},
        {"output", (dir.path / "out_a").string()}}},
      {"backends", {{"rem", {{"type", "hash-judgment"}, {"seed", 13}}}}},
      {"params", {{"k", 2}, {"n", 2}}},
      {"budgets", {{"pair_budget", 2000}}},
  };

  auto run_pipeline = [&](const std::string& out_dir, std::optional<std::string> record,
                          std::optional<std::string> replay) -> bool {
    auto local = config_json;
    local["paths"]["output"] = (dir.path / out_dir).string();
    auto config = cli::PipelineConfig::from_json(local, dir.path);
    cli::ScoreOptions options;
    if (record) options.record_trace = *record;
    if (replay) options.replay_trace = *replay;
    std::ostringstream out, err;
    if (cli::cmd_score(config, options, out, err) != cli::kExitOk) {
      g_notes.push_back("score failed in " + out_dir + ": " + err.str());
      return false;
    }
    int prefs_code = cli::cmd_build_prefs(config, out, err);
    if (prefs_code != cli::kExitOk) {
      g_notes.push_back("build-prefs exited " + std::to_string(prefs_code) + " in " + out_dir +
                        ": " + err.str());
      return false;
    }
    return true;
  };

  std::string trace = (dir.path / "rem.trace.jsonl").string();
  ok = run_pipeline("out_a", trace, std::nullopt) && ok;
  ok = run_pipeline("out_b", std::nullopt, std::nullopt) && ok;
  ok = run_pipeline("out_c", std::nullopt, trace) && ok;

  if (ok) {
    for (const char* artifact : {"scores.jsonl", "dpo.jsonl", "dpo.jsonl.meta.json",
                                 "prefs_stats.json", "score_failures.jsonl"}) {
      auto a = read_text_file(dir.path / "out_a" / artifact);
      auto b = read_text_file(dir.path / "out_b" / artifact);
      auto c = read_text_file(dir.path / "out_c" / artifact);
      if (a != b) ok = expect(false, std::string(artifact) + " differs between identical runs");
      if (a != c) ok = expect(false, std::string(artifact) + " differs under trace replay");
    }
    auto records = prefs::read_dpo(dir.path / "out_a" / "dpo.jsonl");
    ok = expect(!records.empty(), "export is empty; fixture produced no decisive pairs") && ok;
  }
  report(8, "score -> build-prefs: byte-identical across reruns and trace replay (50 dialogues)",
         ok, drain_notes());
}

// ---------------------------------------------------------------------------
// C9: template fidelity against golden files and required phrases
// ---------------------------------------------------------------------------

std::string load_golden(const std::string& name) {
  auto text = read_text_file(std::filesystem::path(FLOWPREF_GOLDEN_DIR) / name);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

void criterion9() {
  bool ok = true;

  // Rule evaluator prompt.
  {
    rem::RemQuery query;
    query.rule = rules::default_graph().rule("A");
    query.history = {{corpus::Speaker::Patient, "I have a headache."},
                     {corpus::Speaker::Doctor, "How long has it lasted?"}};
    auto prompt = rem::render_prompt(query);
    ok = expect(prompt == load_golden("rem_prompt.txt"), "rem prompt drifted from golden file") && ok;
    for (const char* phrase :
         {"Human: Rule:", "History:", "Did the doctor follow the rule during the conversation?",
          "Assistant:"}) {
      ok = expect(contains(prompt, phrase), std::string("rem prompt missing: ") + phrase) && ok;
    }
  }

  // Continuation prompt.
  {
    corpus::Dialogue donor;
    donor.id = "donor";
    donor.turns = {{corpus::Speaker::Patient, "patient line 0 of donor"},
                   {corpus::Speaker::Doctor, "doctor line 0 of donor"}};
    corpus::Dialogue target = donor;
    target.id = "target";
    target.turns[0].text = "patient line 0 of target";
    target.turns[1].text = "doctor line 0 of target";
    auto prompt = corpus::continuation_prompt(donor, target.turns);
    ok = expect(prompt == load_golden("continuation_prompt.txt"),
                "continuation prompt drifted from golden file") && ok;
    for (const char* phrase :
         {"You are a dialogue continuation AI", "Dialogue A:", "Dialogue B:",
          "Please continue Dialogue B while fulfilling the following requirements:",
          "1. The doctor's style should match the doctor's style in Dialogue A.",
          "2. The patient's style should match the patient's style in Dialogue B."}) {
      ok = expect(contains(prompt, phrase), std::string("continuation prompt missing: ") + phrase) && ok;
    }
  }

  // Patient prompt.
  {
    std::vector<spsim::Chunk> retrieved(2);
    retrieved[0].text = "Q: any fever?\nA: yes, for two days.";
    retrieved[1].text = "The patient is a 34-year-old teacher.";
    std::vector<corpus::Turn> history{{corpus::Speaker::Patient, "I feel unwell."},
                                      {corpus::Speaker::Doctor, "Since when?"}};
    auto prompt = spsim::patient_prompt(retrieved, history, "Do you have a cough?");
    ok = expect(prompt == load_golden("patient_prompt.txt"),
                "patient prompt drifted from golden file") && ok;
    for (const char* phrase :
         {"Please play the role of a patient", "no more than two sentences",
          "inform him of the results", "please be passive and accept the doctor's guidance",
          "ask the doctor what disease you have and how it should be treated",
          "(End of Conversation)", "Knowledge Base:", "Conversation history:", "Doctor:",
          "Your response:"}) {
      ok = expect(contains(prompt, phrase), std::string("patient prompt missing: ") + phrase) && ok;
    }
  }

  // Implication prompt.
  {
    auto prompt = metrics::implication_prompt("you likely have flu", "the diagnosis is influenza");
    ok = expect(prompt == load_golden("implication_prompt.txt"),
                "implication prompt drifted from golden file") && ok;
    for (const char* phrase : {"Sentence 1:", "Sentence 2:",
                               "Please decide if sentence 1 implies sentence 2?",
                               "A. Fully; B. Partially; C. Not."}) {
      ok = expect(contains(prompt, phrase), std::string("implication prompt missing: ") + phrase) && ok;
    }
  }

  report(9, "template fidelity: golden files and required phrases for all four prompts", ok,
         drain_notes());
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();

  if (g_failures == 0) {
    std::printf("acceptance: all 9 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return 1;
}
