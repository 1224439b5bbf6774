#include "flowpref/rem_eval.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace flowpref::rem {

using nlohmann::json;

namespace {

void check_query(const RemQuery& query) {
  if (query.history.empty()) throw std::invalid_argument("query history is empty");
  if (query.history.back().speaker != corpus::Speaker::Doctor) {
    throw std::invalid_argument("query history must end with a doctor turn");
  }
  if (query.rule.text.empty()) throw std::invalid_argument("query rule has empty text");
}

constexpr const char* kQuestion = "Did the doctor follow the rule during the conversation?";

std::string ensure_period(std::string text) {
  if (!text.empty() && text.back() != '.' && text.back() != '?' && text.back() != '!') text += '.';
  return text;
}

}  // namespace

std::string render_prompt(const RemQuery& query, const corpus::SpeakerLabels& labels) {
  check_query(query);
  std::string prompt = "Human: Rule: " + ensure_period(query.rule.text);
  prompt += " History: " + ensure_period(corpus::serialize_turns(query.history, labels)) + " ";
  prompt += kQuestion;
  prompt += " Assistant:";
  return prompt;
}

std::string format_completion(const RemJudgment& judgment) {
  if (judgment.score < 0 || judgment.score > 2) {
    throw std::invalid_argument("judgment score must be in {0,1,2}");
  }
  std::string out = judgment.comment;
  if (!out.empty()) out += ' ';
  out += "Score: " + std::to_string(judgment.score) + ".";
  return out;
}

RemJudgment parse_judgment(const std::string& completion) {
  // Last "Score: <n>" wins, case-insensitive, optional space around the colon.
  std::size_t marker = std::string::npos;
  std::size_t score_pos = std::string::npos;
  for (std::size_t i = 0; i + 5 <= completion.size(); ++i) {
    if ((completion[i] == 'S' || completion[i] == 's') &&
        completion.compare(i + 1, 4, "core") == 0) {
      std::size_t j = i + 5;
      while (j < completion.size() && (completion[j] == ' ' || completion[j] == '\t')) ++j;
      if (j < completion.size() && completion[j] == ':') {
        ++j;
        while (j < completion.size() && std::isspace(static_cast<unsigned char>(completion[j]))) ++j;
        if (j < completion.size() && std::isdigit(static_cast<unsigned char>(completion[j]))) {
          marker = i;
          score_pos = j;
        }
      }
    }
  }
  if (marker == std::string::npos) {
    throw ParseError("no score found in evaluator output", completion);
  }
  std::size_t end = score_pos;
  while (end < completion.size() && std::isdigit(static_cast<unsigned char>(completion[end]))) ++end;
  int score = std::stoi(completion.substr(score_pos, end - score_pos));
  if (score < 0 || score > 2) {
    throw ParseError("score " + std::to_string(score) + " outside {0,1,2}", completion);
  }
  RemJudgment judgment;
  judgment.score = score;
  judgment.comment = trim(completion.substr(0, marker));
  return judgment;
}

double rule_score(const RemQuery& query, int k, gateway::ChatBackend& backend,
                  const RuleScoreOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  check_query(query);
  const std::string prompt = render_prompt(query);

  double sum = 0.0;
  int parsed = 0;
  for (int rep = 0; rep < k; ++rep) {
    bool ok = false;
    for (int attempt = 0; attempt <= options.parse_retries && !ok; ++attempt) {
      std::string completion =
          backend.chat(gateway::make_user_request(prompt, 0.0, options.max_output_tokens));
      try {
        sum += parse_judgment(completion).score;
        ++parsed;
        ok = true;
      } catch (const ParseError& e) {
        if (attempt == options.parse_retries) {
          options.warn("dropping unparsable evaluator output for rule " + query.rule.id + ": " +
                       e.what());
        }
      }
    }
  }
  if (parsed == 0) {
    throw RemError("no parsable evaluator output for rule " + query.rule.id + " after " +
                   std::to_string(k) + " repetitions");
  }
  return sum / parsed;
}

std::vector<PrelabelOutcome> prelabel(const std::vector<RemQuery>& queries,
                                      const std::vector<AnnotatedSample>& fewshot,
                                      gateway::ChatBackend& backend,
                                      const RuleScoreOptions& options) {
  if (fewshot.empty()) throw std::invalid_argument("prelabel needs at least one exemplar");

  std::string context;
  for (const auto& sample : fewshot) {
    context += render_prompt(sample.query) + " " + format_completion(sample.gold) + "\n\n";
  }

  std::vector<PrelabelOutcome> outcomes;
  outcomes.reserve(queries.size());
  for (const auto& query : queries) {
    PrelabelOutcome outcome;
    try {
      std::string completion = backend.chat(
          gateway::make_user_request(context + render_prompt(query), 0.0, options.max_output_tokens));
      outcome.judgment = parse_judgment(completion);
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

void export_training_file(const std::vector<AnnotatedSample>& samples,
                          const std::filesystem::path& path) {
  if (samples.empty()) throw std::invalid_argument("no samples to export");
  std::ostringstream out;
  for (const auto& sample : samples) {
    if (sample.annotator_ids.empty()) {
      throw std::invalid_argument("annotated sample has no annotator ids");
    }
    json line{{"prompt", render_prompt(sample.query)},
              {"completion", format_completion(sample.gold)},
              {"loss_boundary", "Assistant"}};
    out << line.dump() << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<TrainingLine> read_training_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RemError("cannot open training file: " + path.string());
  std::vector<TrainingLine> lines;
  std::string raw;
  while (std::getline(in, raw)) {
    if (trim(raw).empty()) continue;
    json value = json::parse(raw);
    lines.push_back({value.at("prompt").get<std::string>(),
                     value.at("completion").get<std::string>(),
                     value.at("loss_boundary").get<std::string>()});
  }
  return lines;
}

Agreement agreement_metrics(const std::vector<int>& preds, const std::vector<int>& golds) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("prediction and gold counts differ");
  }
  if (preds.empty()) throw std::invalid_argument("no samples for agreement metrics");
  std::size_t exact = 0;
  std::size_t fuzzy = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] > 2 || golds[i] < 0 || golds[i] > 2) {
      throw std::invalid_argument("scores must be in {0,1,2}");
    }
    if (preds[i] == golds[i]) ++exact;
    if (std::abs(preds[i] - golds[i]) < 2) ++fuzzy;
  }
  Agreement agreement;
  agreement.exact = 100.0 * static_cast<double>(exact) / static_cast<double>(preds.size());
  agreement.fuzzy = 100.0 * static_cast<double>(fuzzy) / static_cast<double>(preds.size());
  return agreement;
}

}  // namespace flowpref::rem
