#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace flowpref::checklist {

// Grading reference for one case: key symptoms and tests the doctor model
// should ask about, and the diseases accepted as a correct diagnosis.
struct Checklist {
  std::vector<std::string> symptoms;
  std::vector<std::string> tests;
  std::vector<std::string> diseases;
};

struct ChecklistError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json checklist_to_json(const Checklist& checklist);
Checklist checklist_from_json(const nlohmann::json& value);
Checklist load_checklist(const std::filesystem::path& path);

// Per-item pass credit after annotator averaging (0.5 = split decision),
// aligned with the checklist item order.
struct PassAnnotation {
  std::string case_id;
  std::vector<double> symptom_marks;
  std::vector<double> test_marks;
  std::vector<double> disease_marks;
  int diagnosed_disease_count = 0;  // distinct diseases the model asserted
};

struct CaseFractions {
  std::string case_id;
  double symptoms = 0.0;
  double tests = 0.0;
  double diseases = 0.0;
};

// Passed/total per category. Listing four or more candidate diseases zeroes
// the disease category regardless of the marks.
CaseFractions score_case(const PassAnnotation& annotation, const Checklist& checklist);

struct GroupScores {
  std::string group;
  std::size_t cases = 0;
  double symptoms = 0.0;  // mean fraction * 100
  double tests = 0.0;
  double diseases = 0.0;
};

struct ChecklistReport {
  std::vector<GroupScores> groups;  // sorted by group name
  GroupScores overall;              // group == "ALL"
};

// Unweighted mean of per-case fractions within each group and overall,
// scaled to percentages. Every case id must appear in the grouping map.
ChecklistReport aggregate(const std::vector<CaseFractions>& fractions,
                          const std::map<std::string, std::string>& case_to_group);

std::string render_report_markdown(const ChecklistReport& report);
std::string render_report_csv(const ChecklistReport& report);

// Reads per-annotator boolean marks (JSONL, one case per line) and averages
// them at the item level. Every item must carry exactly annotator_count
// marks.
std::vector<PassAnnotation> annotation_ingest(const std::filesystem::path& path);
PassAnnotation annotation_from_json(const nlohmann::json& value);

}  // namespace flowpref::checklist
