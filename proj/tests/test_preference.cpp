#include <doctest.h>

#include <cmath>

#include "flowpref/preference.hpp"
#include "support.hpp"

using namespace flowpref;
using prefs::Label;
using testsupport::doctor;
using testsupport::patient;

namespace {

scoring::CandidateScore make_score(const std::string& id, double total) {
  scoring::CandidateScore score;
  score.record_id = id;
  score.immediate.total = total;
  score.discounted_total = total;
  return score;
}

prefs::PreferencePair pair_with_gap(const std::string& id, double score_a, double score_b) {
  return prefs::make_pair(id, {patient("history for " + id)},
                          {"sampled answer " + id, corpus::Source::Sampled},
                          {"predicted answer " + id, corpus::Source::Predicted},
                          make_score(id + "#a", score_a), make_score(id + "#b", score_b));
}

}  // namespace

TEST_SUITE("preference") {

TEST_CASE("classify") {
  CHECK(prefs::classify(3.0, 2.1) == Label::Tie);   // gap 0.9
  CHECK(prefs::classify(3.2, 2.1) == Label::AWins);  // gap 1.1
  CHECK(prefs::classify(2.1, 3.2) == Label::BWins);
  CHECK(prefs::classify(5.0, 5.0) == Label::Tie);
  CHECK(prefs::classify(-1.0, -1.0) == Label::Tie);

  SUBCASE("threshold boundary is decisive") {
    CHECK(prefs::classify(3.0, 2.0000001) == Label::Tie);
    CHECK(prefs::classify(3.0, 2.0) == Label::AWins);  // gap exactly 1.0
  }
  SUBCASE("swapping candidates mirrors the label") {
    std::uint64_t state = 8;
    for (int trial = 0; trial < 300; ++trial) {
      state = splitmix64(state);
      double a = 8.0 * unit_double_from_bits(state);
      state = splitmix64(state);
      double b = 8.0 * unit_double_from_bits(state);
      auto forward = prefs::classify(a, b);
      auto backward = prefs::classify(b, a);
      if (forward == Label::Tie) CHECK(backward == Label::Tie);
      if (forward == Label::AWins) CHECK(backward == Label::BWins);
      if (forward == Label::BWins) CHECK(backward == Label::AWins);
    }
  }
  SUBCASE("non-finite scores are rejected") {
    CHECK_THROWS_AS(prefs::classify(std::nan(""), 1.0), std::invalid_argument);
  }
}

TEST_CASE("select pairs") {
  SUBCASE("sorts by gap descending and honors the budget") {
    std::vector<prefs::PreferencePair> pairs{
        pair_with_gap("p1", 2.0, 1.5),  // gap 0.5 -> tie
        pair_with_gap("p2", 3.0, 1.6),  // gap 1.4
        pair_with_gap("p3", 4.0, 2.0),  // gap 2.0
        pair_with_gap("p4", 1.0, 2.1),  // gap 1.1
    };
    auto selected = prefs::select_pairs(pairs, 2);
    REQUIRE(selected.size() == 2);
    CHECK(selected[0].id == "p3");
    CHECK(selected[1].id == "p2");
  }
  SUBCASE("all ties give an empty selection plus a warning") {
    std::vector<prefs::PreferencePair> pairs{pair_with_gap("t1", 1.0, 1.2),
                                             pair_with_gap("t2", 2.0, 2.0)};
    std::vector<std::string> warnings;
    auto selected =
        prefs::select_pairs(pairs, 5, [&](const std::string& w) { warnings.push_back(w); });
    CHECK(selected.empty());
    CHECK(warnings.size() == 1);
  }
  SUBCASE("gap ties break by id for determinism") {
    std::vector<prefs::PreferencePair> pairs{pair_with_gap("zz", 4.0, 2.0),
                                             pair_with_gap("aa", 6.0, 4.0)};
    auto selected = prefs::select_pairs(pairs, 2);
    REQUIRE(selected.size() == 2);
    CHECK(selected[0].id == "aa");
    CHECK(selected[1].id == "zz");
  }
  SUBCASE("selected gaps are non-increasing on random inputs") {
    std::uint64_t state = 44;
    std::vector<prefs::PreferencePair> pairs;
    for (int i = 0; i < 200; ++i) {
      state = splitmix64(state);
      double a = 10.0 * unit_double_from_bits(state);
      state = splitmix64(state);
      double b = 10.0 * unit_double_from_bits(state);
      pairs.push_back(pair_with_gap("r" + std::to_string(i), a, b));
    }
    auto selected = prefs::select_pairs(pairs, 50);
    for (std::size_t i = 1; i < selected.size(); ++i) {
      CHECK(selected[i - 1].gap >= selected[i].gap);
      CHECK(selected[i].label != Label::Tie);
    }
  }
}

TEST_CASE("provenance stats") {
  SUBCASE("ratio of sampled to predicted winners") {
    std::vector<prefs::PreferencePair> pairs;
    for (int i = 0; i < 12; ++i) pairs.push_back(pair_with_gap("s" + std::to_string(i), 5.0, 1.0));
    for (int i = 0; i < 10; ++i) pairs.push_back(pair_with_gap("p" + std::to_string(i), 1.0, 5.0));
    auto stats = prefs::provenance_stats(pairs);
    CHECK(stats.sampled_wins == 12);
    CHECK(stats.predicted_wins == 10);
    CHECK(stats.ratio == doctest::Approx(1.2));
  }
  SUBCASE("all sampled wins reports infinity with counts") {
    std::vector<prefs::PreferencePair> pairs{pair_with_gap("x", 9.0, 1.0)};
    auto stats = prefs::provenance_stats(pairs);
    CHECK(stats.sampled_wins == 1);
    CHECK(stats.predicted_wins == 0);
    CHECK(std::isinf(stats.ratio));
  }
  SUBCASE("symmetric outcomes give 1.0") {
    std::vector<prefs::PreferencePair> pairs{pair_with_gap("a", 5.0, 1.0),
                                             pair_with_gap("b", 1.0, 5.0)};
    CHECK(prefs::provenance_stats(pairs).ratio == doctest::Approx(1.0));
  }
}

TEST_CASE("dpo export") {
  testsupport::TempDir dir("dpo");
  std::vector<prefs::PreferencePair> pairs;
  for (int i = 0; i < 20; ++i) {
    pairs.push_back(pair_with_gap("pair" + std::to_string(i), 4.0 + i * 0.1, 1.0));
  }
  auto selected = prefs::select_pairs(pairs, 20);

  prefs::TrainingMeta meta;
  meta.trainer = nlohmann::json{{"lora_alpha", 16}, {"lora_r", 64}, {"lambda", 0.1}};
  auto path = dir.file("dpo.jsonl");
  prefs::export_dpo(selected, path, meta);

  SUBCASE("line count plus sidecar") {
    auto records = prefs::read_dpo(path);
    CHECK(records.size() == 20);
    auto sidecar = nlohmann::json::parse(read_text_file(dir.file("dpo.jsonl.meta.json")));
    CHECK(sidecar.at("trainer").at("lora_alpha") == 16);
    CHECK(sidecar.at("trainer").at("lora_r") == 64);
    CHECK(sidecar.at("score_params").at("d") == doctest::Approx(0.65));
    CHECK(sidecar.at("pair_count") == 20);
  }
  SUBCASE("round trip preserves records") {
    auto records = prefs::read_dpo(path);
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(records[i].chosen != records[i].rejected);
      CHECK(contains(records[i].prompt, "Patient: history for "));
      CHECK(records[i].metadata.at("gap").get<double>() >= 1.0);
    }
  }
  SUBCASE("chosen is always the higher-scored candidate") {
    auto flipped = pair_with_gap("flip", 1.0, 9.0);  // predicted wins
    prefs::export_dpo({flipped}, dir.file("flip.jsonl"), meta);
    auto records = prefs::read_dpo(dir.file("flip.jsonl"));
    REQUIRE(records.size() == 1);
    CHECK(records[0].chosen == "predicted answer flip");
    CHECK(records[0].rejected == "sampled answer flip");
    CHECK(records[0].metadata.at("chosen_provenance") == "predicted");
  }
  SUBCASE("tie pairs are rejected at export") {
    auto tie = pair_with_gap("tie", 1.0, 1.2);
    CHECK_THROWS_AS(prefs::export_dpo({tie}, dir.file("tie.jsonl"), meta), std::logic_error);
  }
}

TEST_CASE("dpo loss") {
  SUBCASE("identity case is ln 2") {
    CHECK(prefs::dpo_loss(-3.0, -7.0, -3.0, -7.0, 0.5) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("worked example") {
    CHECK(prefs::dpo_loss(-10.0, -12.0, -10.0, -11.0, 0.1) ==
          doctest::Approx(0.644397).epsilon(1e-6));
  }
  SUBCASE("always positive, decreasing in the chosen log-probability") {
    std::uint64_t state = 91;
    for (int trial = 0; trial < 1000; ++trial) {
      auto draw = [&] {
        state = splitmix64(state);
        return -20.0 * unit_double_from_bits(state);
      };
      double c = draw(), r = draw(), sc = draw(), sr = draw();
      state = splitmix64(state);
      double lambda = 0.05 + 0.9 * unit_double_from_bits(state);
      double loss = prefs::dpo_loss(c, r, sc, sr, lambda);
      CHECK(loss > 0.0);
      CHECK(prefs::dpo_loss(c + 0.5, r, sc, sr, lambda) < loss);
      CHECK(prefs::dpo_loss(c, r, c, r, lambda) == doctest::Approx(std::log(2.0)));
    }
  }
  SUBCASE("extreme margins stay finite") {
    CHECK(std::isfinite(prefs::dpo_loss(-1.0, -900.0, -500.0, -2.0, 0.9)));
    CHECK(std::isfinite(prefs::dpo_loss(-900.0, -1.0, -2.0, -500.0, 0.9)));
  }
  SUBCASE("lambda outside (0,1) is rejected") {
    CHECK_THROWS_AS(prefs::dpo_loss(-1, -2, -1, -2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(prefs::dpo_loss(-1, -2, -1, -2, 1.0), std::invalid_argument);
  }
}

}  // TEST_SUITE
