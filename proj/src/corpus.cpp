#include "flowpref/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

namespace flowpref::corpus {

using nlohmann::json;

std::string speaker_name(Speaker speaker) {
  return speaker == Speaker::Patient ? "patient" : "doctor";
}

Speaker speaker_from_name(const std::string& name) {
  if (name == "patient" || name == "Patient") return Speaker::Patient;
  if (name == "doctor" || name == "Doctor") return Speaker::Doctor;
  throw CorpusError("unknown speaker: " + name);
}

std::string source_name(Source source) {
  return source == Source::Sampled ? "sampled" : "predicted";
}

Source source_from_name(const std::string& name) {
  if (name == "sampled") return Source::Sampled;
  if (name == "predicted") return Source::Predicted;
  throw CorpusError("unknown source: " + name);
}

void validate_dialogue(const Dialogue& dialogue) {
  if (dialogue.turns.empty()) throw CorpusError("dialogue " + dialogue.id + " has no turns");
  if (dialogue.turns.front().speaker != Speaker::Patient) {
    throw CorpusError("dialogue " + dialogue.id + " must start with a patient turn");
  }
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    if (trim(dialogue.turns[i].text).empty()) {
      throw CorpusError("dialogue " + dialogue.id + " has a blank turn at index " + std::to_string(i));
    }
    if (i > 0 && dialogue.turns[i].speaker == dialogue.turns[i - 1].speaker) {
      throw CorpusError("dialogue " + dialogue.id + " does not alternate at index " + std::to_string(i));
    }
  }
}

SpeakerLabels SpeakerLabels::defaults() {
  SpeakerLabels labels;
  labels.aliases = {
      {"患者", Speaker::Patient}, {"病人", Speaker::Patient}, {"医生", Speaker::Doctor},
  };
  return labels;
}

std::string SpeakerLabels::label(Speaker speaker) const {
  return speaker == Speaker::Patient ? patient : doctor;
}

std::string serialize_turns(std::span<const Turn> turns, const SpeakerLabels& labels) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += labels.label(turns[i].speaker);
    out += ": ";
    out += turns[i].text;
  }
  return out;
}

json dialogue_to_json(const Dialogue& dialogue) {
  json turns = json::array();
  for (const auto& turn : dialogue.turns) {
    turns.push_back({{"speaker", speaker_name(turn.speaker)}, {"text", turn.text}});
  }
  return json{{"id", dialogue.id}, {"turns", std::move(turns)}, {"source", source_name(dialogue.source)}};
}

Dialogue dialogue_from_json(const json& value) {
  Dialogue dialogue;
  dialogue.id = value.at("id").get<std::string>();
  dialogue.source = value.contains("source") ? source_from_name(value.at("source").get<std::string>())
                                             : Source::Sampled;
  for (const auto& entry : value.at("turns")) {
    Turn turn{speaker_from_name(entry.at("speaker").get<std::string>()),
              entry.at("text").get<std::string>()};
    // Merge consecutive same-speaker utterances into one turn.
    if (!dialogue.turns.empty() && dialogue.turns.back().speaker == turn.speaker) {
      dialogue.turns.back().text += "\n" + turn.text;
    } else {
      dialogue.turns.push_back(std::move(turn));
    }
  }
  validate_dialogue(dialogue);
  return dialogue;
}

LoadReport load_dialogues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path.string());
  LoadReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      report.dialogues.push_back(dialogue_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      report.issues.push_back({line_no, e.what()});
    }
  }
  if (report.dialogues.empty()) {
    throw CorpusError("no valid dialogue records in " + path.string() + " (" +
                      std::to_string(report.issues.size()) + " rejected)");
  }
  return report;
}

void save_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  std::ostringstream out;
  for (const auto& dialogue : dialogues) out << dialogue_to_json(dialogue).dump() << '\n';
  write_text_file(path, out.str());
}

SplitRecord split_at(const Dialogue& dialogue, std::size_t doctor_turn_index, int horizon) {
  validate_dialogue(dialogue);
  if (horizon < 0) throw CorpusError("horizon must be >= 0");
  if (doctor_turn_index >= dialogue.turns.size()) {
    throw CorpusError("split index " + std::to_string(doctor_turn_index) + " out of range for dialogue " +
                      dialogue.id);
  }
  if (dialogue.turns[doctor_turn_index].speaker != Speaker::Doctor) {
    throw CorpusError("split index " + std::to_string(doctor_turn_index) +
                      " is not a doctor turn in dialogue " + dialogue.id);
  }

  SplitRecord record;
  record.dialogue_id = dialogue.id;
  record.id = dialogue.id + ":" + std::to_string(doctor_turn_index);
  record.history.assign(dialogue.turns.begin(),
                        dialogue.turns.begin() + static_cast<std::ptrdiff_t>(doctor_turn_index));
  record.candidate = dialogue.turns[doctor_turn_index];
  for (std::size_t i = doctor_turn_index + 1;
       i + 1 < dialogue.turns.size() && record.future.size() < static_cast<std::size_t>(horizon);
       i += 2) {
    record.future.push_back({dialogue.turns[i], dialogue.turns[i + 1]});
  }
  return record;
}

SplitRecord random_split(const Dialogue& dialogue, std::uint64_t seed, int horizon) {
  validate_dialogue(dialogue);
  std::vector<std::size_t> doctor_turns;
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    if (dialogue.turns[i].speaker == Speaker::Doctor) doctor_turns.push_back(i);
  }
  if (doctor_turns.empty()) throw CorpusError("dialogue " + dialogue.id + " has no doctor turn");
  // splitmix64 keeps the choice deterministic across platforms.
  std::uint64_t state = splitmix64(seed);
  return split_at(dialogue, doctor_turns[state % doctor_turns.size()], horizon);
}

std::string continuation_prompt(const Dialogue& style_donor, std::span<const Turn> target_history,
                                const SpeakerLabels& labels, const WarningSink& warn) {
  if (style_donor.turns.empty()) throw CorpusError("style donor dialogue is empty");
  if (target_history.empty()) throw CorpusError("target history is empty");
  std::string donor_text = serialize_turns(style_donor.turns, labels);
  std::string target_text = serialize_turns(target_history, labels);
  if (donor_text == target_text) {
    warn("continuation prompt uses the target dialogue as its own style donor");
  }
  std::string prompt;
  prompt += "You are a dialogue continuation AI, please read the below two dialogues and follow my "
            "instructions.\n";
  prompt += "Dialogue A: " + donor_text + ".\n";
  prompt += "Dialogue B: " + target_text + ".\n";
  prompt += "Please continue Dialogue B while fulfilling the following requirements:\n";
  prompt += "1. The doctor's style should match the doctor's style in Dialogue A.\n";
  prompt += "2. The patient's style should match the patient's style in Dialogue B.";
  return prompt;
}

namespace {

struct LabelMatch {
  Speaker speaker;
  std::size_t label_length;
};

std::optional<LabelMatch> match_label(std::string_view line, const SpeakerLabels& labels) {
  auto try_one = [&](const std::string& label, Speaker speaker) -> std::optional<LabelMatch> {
    if (line.size() > label.size() && line.substr(0, label.size()) == label) {
      std::string_view rest = line.substr(label.size());
      if (!rest.empty() && (rest.front() == ':' || rest.substr(0, 3) == "\xEF\xBC\x9A")) {
        return LabelMatch{speaker, label.size()};
      }
    }
    return std::nullopt;
  };
  if (auto m = try_one(labels.patient, Speaker::Patient)) return m;
  if (auto m = try_one(labels.doctor, Speaker::Doctor)) return m;
  for (const auto& [alias, speaker] : labels.aliases) {
    if (auto m = try_one(alias, speaker)) return m;
  }
  return std::nullopt;
}

std::string strip_label_separator(std::string_view rest) {
  if (!rest.empty() && rest.front() == ':') rest.remove_prefix(1);
  else if (rest.substr(0, 3) == "\xEF\xBC\x9A") rest.remove_prefix(3);  // fullwidth colon
  return trim(rest);
}

}  // namespace

std::vector<Turn> parse_continuation(const std::string& completion,
                                     std::span<const Turn> target_history,
                                     const SpeakerLabels& labels) {
  if (trim(completion).empty()) throw CorpusError("continuation completion is empty");

  std::vector<Turn> parsed;
  for (const auto& line : split_lines(completion)) {
    std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    if (auto match = match_label(trimmed, labels)) {
      std::string text = strip_label_separator(std::string_view(trimmed).substr(match->label_length));
      if (!parsed.empty() && parsed.back().speaker == match->speaker) {
        if (!text.empty()) parsed.back().text += "\n" + text;
      } else {
        parsed.push_back({match->speaker, std::move(text)});
      }
    } else if (!parsed.empty()) {
      parsed.back().text += "\n" + trimmed;
    }
    // Unlabelled text before the first label is preamble; ignore it.
  }
  parsed.erase(std::remove_if(parsed.begin(), parsed.end(),
                              [](const Turn& t) { return trim(t.text).empty(); }),
               parsed.end());
  if (parsed.empty()) throw CorpusError("no recognizable turns in continuation");

  // Strip a restated history: the longest parsed prefix that matches a
  // suffix of the target history.
  std::size_t strip = 0;
  for (std::size_t candidate = std::min(parsed.size(), target_history.size()); candidate > 0;
       --candidate) {
    bool matches = true;
    std::size_t offset = target_history.size() - candidate;
    for (std::size_t i = 0; i < candidate; ++i) {
      if (parsed[i].speaker != target_history[offset + i].speaker ||
          trim(parsed[i].text) != trim(target_history[offset + i].text)) {
        matches = false;
        break;
      }
    }
    if (matches) {
      strip = candidate;
      break;
    }
  }
  parsed.erase(parsed.begin(), parsed.begin() + static_cast<std::ptrdiff_t>(strip));

  if (parsed.empty()) throw CorpusError("continuation only restates the history");
  if (parsed.front().speaker != Speaker::Doctor) {
    throw CorpusError("continuation must start with a doctor turn");
  }
  return parsed;
}

}  // namespace flowpref::corpus
