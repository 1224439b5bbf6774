#include "flowpref/checklist.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flowpref/util.hpp"

namespace flowpref::checklist {

using nlohmann::json;

json checklist_to_json(const Checklist& checklist) {
  return json{{"symptoms", checklist.symptoms}, {"tests", checklist.tests},
              {"diseases", checklist.diseases}};
}

Checklist checklist_from_json(const json& value) {
  Checklist checklist;
  checklist.symptoms = value.at("symptoms").get<std::vector<std::string>>();
  checklist.tests = value.at("tests").get<std::vector<std::string>>();
  checklist.diseases = value.at("diseases").get<std::vector<std::string>>();
  if (checklist.symptoms.empty() || checklist.tests.empty() || checklist.diseases.empty()) {
    throw ChecklistError("checklist categories must be non-empty");
  }
  return checklist;
}

Checklist load_checklist(const std::filesystem::path& path) {
  try {
    return checklist_from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    throw ChecklistError("malformed checklist " + path.string() + ": " + e.what());
  }
}

namespace {

double category_fraction(const std::vector<double>& marks, std::size_t expected,
                         const std::string& what, const std::string& case_id) {
  if (marks.size() != expected) {
    throw ChecklistError("annotation for case " + case_id + " covers " +
                         std::to_string(marks.size()) + " " + what + " items, checklist has " +
                         std::to_string(expected));
  }
  for (double mark : marks) {
    if (mark < 0.0 || mark > 1.0) {
      throw ChecklistError("mark outside [0,1] in case " + case_id);
    }
  }
  double passed = std::accumulate(marks.begin(), marks.end(), 0.0);
  return passed / static_cast<double>(expected);
}

}  // namespace

CaseFractions score_case(const PassAnnotation& annotation, const Checklist& checklist) {
  CaseFractions fractions;
  fractions.case_id = annotation.case_id;
  fractions.symptoms = category_fraction(annotation.symptom_marks, checklist.symptoms.size(),
                                         "symptom", annotation.case_id);
  fractions.tests =
      category_fraction(annotation.test_marks, checklist.tests.size(), "test", annotation.case_id);
  fractions.diseases = category_fraction(annotation.disease_marks, checklist.diseases.size(),
                                         "disease", annotation.case_id);
  // Hedging across four or more candidate diseases counts as a failed diagnosis.
  if (annotation.diagnosed_disease_count >= 4) fractions.diseases = 0.0;
  return fractions;
}

ChecklistReport aggregate(const std::vector<CaseFractions>& fractions,
                          const std::map<std::string, std::string>& case_to_group) {
  if (fractions.empty()) throw ChecklistError("no case fractions to aggregate");

  std::map<std::string, GroupScores> groups;
  GroupScores overall;
  overall.group = "ALL";
  for (const auto& f : fractions) {
    auto it = case_to_group.find(f.case_id);
    if (it == case_to_group.end()) {
      throw ChecklistError("unknown department for case " + f.case_id);
    }
    auto& group = groups[it->second];
    group.group = it->second;
    group.cases += 1;
    group.symptoms += f.symptoms;
    group.tests += f.tests;
    group.diseases += f.diseases;
    overall.cases += 1;
    overall.symptoms += f.symptoms;
    overall.tests += f.tests;
    overall.diseases += f.diseases;
  }

  auto finish = [](GroupScores& g) {
    const double n = static_cast<double>(g.cases);
    g.symptoms = 100.0 * g.symptoms / n;
    g.tests = 100.0 * g.tests / n;
    g.diseases = 100.0 * g.diseases / n;
  };

  ChecklistReport report;
  for (auto& [name, group] : groups) {
    finish(group);
    report.groups.push_back(group);
  }
  finish(overall);
  report.overall = overall;
  return report;
}

namespace {

std::string one_decimal(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

}  // namespace

std::string render_report_markdown(const ChecklistReport& report) {
  std::ostringstream out;
  out << "| Group | Cases | Sym. | Test | Dis. |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& group : report.groups) {
    out << "| " << group.group << " | " << group.cases << " | " << one_decimal(group.symptoms)
        << " | " << one_decimal(group.tests) << " | " << one_decimal(group.diseases) << " |\n";
  }
  out << "| ALL | " << report.overall.cases << " | " << one_decimal(report.overall.symptoms)
      << " | " << one_decimal(report.overall.tests) << " | " << one_decimal(report.overall.diseases)
      << " |\n";
  return out.str();
}

std::string render_report_csv(const ChecklistReport& report) {
  std::ostringstream out;
  out << "group,cases,symptoms,tests,diseases\n";
  for (const auto& group : report.groups) {
    out << group.group << ',' << group.cases << ',' << one_decimal(group.symptoms) << ','
        << one_decimal(group.tests) << ',' << one_decimal(group.diseases) << '\n';
  }
  out << "ALL," << report.overall.cases << ',' << one_decimal(report.overall.symptoms) << ','
      << one_decimal(report.overall.tests) << ',' << one_decimal(report.overall.diseases) << '\n';
  return out.str();
}

namespace {

std::vector<double> average_marks(const json& items, std::size_t annotator_count,
                                  const std::string& case_id) {
  std::vector<double> averaged;
  for (const auto& item : items) {
    if (!item.is_array() || item.size() != annotator_count) {
      throw ChecklistError("case " + case_id + ": item has " + std::to_string(item.size()) +
                           " marks, expected " + std::to_string(annotator_count));
    }
    double sum = 0.0;
    for (const auto& mark : item) sum += mark.get<bool>() ? 1.0 : 0.0;
    averaged.push_back(sum / static_cast<double>(annotator_count));
  }
  return averaged;
}

}  // namespace

PassAnnotation annotation_from_json(const json& value) {
  PassAnnotation annotation;
  annotation.case_id = value.at("case_id").get<std::string>();
  const std::size_t annotator_count = value.at("annotator_count").get<std::size_t>();
  if (annotator_count == 0) throw ChecklistError("annotator_count must be positive");
  annotation.diagnosed_disease_count = value.at("diagnosed_disease_count").get<int>();
  const auto& marks = value.at("marks");
  annotation.symptom_marks = average_marks(marks.at("symptoms"), annotator_count, annotation.case_id);
  annotation.test_marks = average_marks(marks.at("tests"), annotator_count, annotation.case_id);
  annotation.disease_marks = average_marks(marks.at("diseases"), annotator_count, annotation.case_id);
  return annotation;
}

std::vector<PassAnnotation> annotation_ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ChecklistError("cannot open annotation file: " + path.string());
  std::vector<PassAnnotation> annotations;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      annotations.push_back(annotation_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ChecklistError("annotation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (annotations.empty()) throw ChecklistError("no annotations in " + path.string());
  return annotations;
}

}  // namespace flowpref::checklist
