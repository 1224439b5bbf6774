#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowpref/util.hpp"

namespace flowpref::corpus {

enum class Speaker { Patient, Doctor };

std::string speaker_name(Speaker speaker);
Speaker speaker_from_name(const std::string& name);

struct Turn {
  Speaker speaker = Speaker::Patient;
  std::string text;
};

enum class Source { Sampled, Predicted };

std::string source_name(Source source);
Source source_from_name(const std::string& name);

// Alternating patient/doctor utterances, patient first.
struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  Source source = Source::Sampled;
};

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Throws CorpusError when turns are empty, speakers do not alternate,
// the first turn is not the patient, or a turn is blank.
void validate_dialogue(const Dialogue& dialogue);

struct Round {
  Turn patient;
  Turn doctor;
};

// One candidate-scoring unit: history ends with a patient turn, the
// candidate is the doctor turn that answers it, future holds up to n
// following (patient, doctor) rounds.
struct SplitRecord {
  std::string id;  // "<dialogue_id>:<turn index>"
  std::string dialogue_id;
  std::vector<Turn> history;
  Turn candidate;
  std::vector<Round> future;
};

// Serialization labels plus extra aliases recognized when parsing model
// output (the shipped defaults include common Chinese speaker labels).
struct SpeakerLabels {
  std::string patient = "Patient";
  std::string doctor = "Doctor";
  std::vector<std::pair<std::string, Speaker>> aliases;

  static SpeakerLabels defaults();
  std::string label(Speaker speaker) const;
};

std::string serialize_turns(std::span<const Turn> turns,
                            const SpeakerLabels& labels = SpeakerLabels::defaults());

struct LoadIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadReport {
  std::vector<Dialogue> dialogues;
  std::vector<LoadIssue> issues;
};

// JSONL ingestion: one object per line {id, turns:[{speaker,text}...], source}.
// Consecutive same-speaker turns are merged. Malformed lines land in the
// issue list; an unreadable file or zero valid records throws CorpusError.
LoadReport load_dialogues(const std::filesystem::path& path);

void save_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);

nlohmann::json dialogue_to_json(const Dialogue& dialogue);
Dialogue dialogue_from_json(const nlohmann::json& value);

// Splits at the doctor turn with the given index into `turns`; future is
// capped at `horizon` rounds. Throws CorpusError when the index does not
// address a doctor turn.
SplitRecord split_at(const Dialogue& dialogue, std::size_t doctor_turn_index, int horizon);

// Seeded uniform choice among all doctor turns.
SplitRecord random_split(const Dialogue& dialogue, std::uint64_t seed, int horizon);

// One-shot continuation instruction: dialogue A donates the doctor's style,
// dialogue B is the history to continue.
std::string continuation_prompt(const Dialogue& style_donor, std::span<const Turn> target_history,
                                const SpeakerLabels& labels = SpeakerLabels::defaults(),
                                const WarningSink& warn = null_warning_sink());

// Extracts labelled turns from a completion. A restated history prefix is
// stripped; the first surviving turn must be the doctor (the candidate).
std::vector<Turn> parse_continuation(const std::string& completion,
                                     std::span<const Turn> target_history,
                                     const SpeakerLabels& labels = SpeakerLabels::defaults());

}  // namespace flowpref::corpus
