#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowpref/gateway.hpp"

namespace flowpref::metrics {

enum class Implication { Fully, Partially, Not };

std::string implication_name(Implication implication);

struct ImplicationJudgment {
  Implication category = Implication::Not;
  std::string raw;
};

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Judge instruction with lettered options A/B/C.
std::string implication_prompt(const std::string& predict, const std::string& reference);

// First standalone A/B/C letter or option word wins, case-insensitive.
ImplicationJudgment parse_implication(const std::string& completion);

// (2*|Not| + |Partially|) / |ALL|, in [0,2]; lower is better.
double gpt_distance(std::span<const ImplicationJudgment> judgments);

struct DistanceReport {
  std::size_t fully = 0;
  std::size_t partially = 0;
  std::size_t not_implied = 0;
  std::size_t total = 0;
  double distance = 0.0;
};

DistanceReport distance_report(std::span<const ImplicationJudgment> judgments);

enum class LengthUnit { Codepoints, Bytes, Tokens };

// Mean output length; the default unit counts Unicode codepoints.
double length_stats(std::span<const std::string> outputs, LengthUnit unit = LengthUnit::Codepoints,
                    const gateway::TokenCounter& counter = gateway::default_token_counter());

}  // namespace flowpref::metrics
