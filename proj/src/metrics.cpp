#include "flowpref/metrics.hpp"

#include <cctype>

#include "flowpref/util.hpp"

namespace flowpref::metrics {

std::string implication_name(Implication implication) {
  switch (implication) {
    case Implication::Fully: return "fully";
    case Implication::Partially: return "partially";
    case Implication::Not: return "not";
  }
  return "not";
}

std::string implication_prompt(const std::string& predict, const std::string& reference) {
  if (predict.empty() || reference.empty()) {
    throw std::invalid_argument("both sentences must be non-empty");
  }
  std::string prompt;
  prompt += "Sentence 1: " + predict + "; Sentence 2: " + reference + "\n";
  prompt += "Please decide if sentence 1 implies sentence 2?\n";
  prompt += "A. Fully; B. Partially; C. Not.";
  return prompt;
}

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Case-insensitive standalone word search; returns npos when absent.
std::size_t find_word(const std::string& text, const std::string& word) {
  for (std::size_t i = 0; i + word.size() <= text.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < word.size(); ++j) {
      if (std::tolower(static_cast<unsigned char>(text[i + j])) !=
          std::tolower(static_cast<unsigned char>(word[j]))) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    const bool left_ok = i == 0 || !is_word_char(text[i - 1]);
    const std::size_t after = i + word.size();
    const bool right_ok = after >= text.size() || !is_word_char(text[after]);
    if (left_ok && right_ok) return i;
  }
  return std::string::npos;
}

}  // namespace

ImplicationJudgment parse_implication(const std::string& completion) {
  struct Option {
    const char* token;
    Implication implication;
  };
  static const Option kOptions[] = {
      {"A", Implication::Fully},     {"B", Implication::Partially}, {"C", Implication::Not},
      {"Fully", Implication::Fully}, {"Partially", Implication::Partially},
      {"Not", Implication::Not},
  };

  std::size_t best_pos = std::string::npos;
  Implication best = Implication::Not;
  for (const auto& option : kOptions) {
    std::size_t pos = find_word(completion, option.token);
    if (pos != std::string::npos && pos < best_pos) {
      best_pos = pos;
      best = option.implication;
    }
  }
  if (best_pos == std::string::npos) {
    throw MetricsError("no recognizable option in judge output: " + completion);
  }
  ImplicationJudgment judgment;
  judgment.category = best;
  judgment.raw = completion;
  return judgment;
}

double gpt_distance(std::span<const ImplicationJudgment> judgments) {
  return distance_report(judgments).distance;
}

DistanceReport distance_report(std::span<const ImplicationJudgment> judgments) {
  if (judgments.empty()) throw std::invalid_argument("no judgments");
  DistanceReport report;
  for (const auto& judgment : judgments) {
    switch (judgment.category) {
      case Implication::Fully: ++report.fully; break;
      case Implication::Partially: ++report.partially; break;
      case Implication::Not: ++report.not_implied; break;
    }
  }
  report.total = judgments.size();
  report.distance = (2.0 * static_cast<double>(report.not_implied) +
                     static_cast<double>(report.partially)) /
                    static_cast<double>(report.total);
  return report;
}

double length_stats(std::span<const std::string> outputs, LengthUnit unit,
                    const gateway::TokenCounter& counter) {
  if (outputs.empty()) throw std::invalid_argument("no outputs");
  double sum = 0.0;
  for (const auto& output : outputs) {
    switch (unit) {
      case LengthUnit::Codepoints: sum += static_cast<double>(utf8_codepoint_count(output)); break;
      case LengthUnit::Bytes: sum += static_cast<double>(output.size()); break;
      case LengthUnit::Tokens: sum += static_cast<double>(counter(output)); break;
    }
  }
  return sum / static_cast<double>(outputs.size());
}

}  // namespace flowpref::metrics
