#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowpref/checklist.hpp"
#include "flowpref/corpus.hpp"
#include "flowpref/gateway.hpp"

namespace flowpref::spsim {

struct QaPair {
  std::string question;
  std::string answer;
};

struct PatientCase {
  std::string id;
  std::string department;
  std::string patient_info;
  std::vector<QaPair> script;
  checklist::Checklist checklist;
};

struct SimulatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ChunkSource { Info, Script };

struct Chunk {
  int id = 0;  // per-case ordinal; retrieval tie-break key
  std::string case_id;
  ChunkSource source = ChunkSource::Info;
  std::string text;
  gateway::EmbeddingVector embedding;
};

struct ChunkingOptions {
  std::size_t max_tokens = 128;
  gateway::TokenCounter counter = gateway::default_token_counter();
};

// Greedy token-budgeted splitter. Raises SimulatorError if a piece cannot
// be brought under the budget even after maximal splitting.
std::vector<std::string> split_to_chunks(const std::string& text, const ChunkingOptions& options);

struct CaseIndex {
  PatientCase patient;
  std::vector<Chunk> chunks;
};

// Loads info.txt, script.jsonl ({question, answer} lines) and checklist.json
// from the bundle directory. No embedding calls.
PatientCase load_case_bundle(const std::filesystem::path& bundle_dir);

// load_case_bundle + chunking + embedding of every chunk.
CaseIndex ingest_case(const std::filesystem::path& bundle_dir, gateway::EmbeddingBackend& embedder,
                      const ChunkingOptions& options = {});

CaseIndex build_index(PatientCase patient, gateway::EmbeddingBackend& embedder,
                      const ChunkingOptions& options = {});

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Top-n chunks by cosine similarity to the query text; ties broken by chunk
// id ascending. The query is typically the last two conversation rounds.
std::vector<Chunk> retrieve(const CaseIndex& index, const std::string& query,
                            gateway::EmbeddingBackend& embedder, std::size_t top_n = 4);

// Serializes the trailing conversation window used as the retrieval query:
// the last `rounds` doctor turns plus interleaved patient turns.
std::string last_rounds_text(std::span<const corpus::Turn> turns, int rounds,
                             const corpus::SpeakerLabels& labels = corpus::SpeakerLabels::defaults());

// Role-play instruction with knowledge base, history and the pending doctor
// message. Requirement 5 defines the end-of-conversation marker.
std::string patient_prompt(std::span<const Chunk> retrieved, std::span<const corpus::Turn> history,
                           const std::string& doctor_msg,
                           const corpus::SpeakerLabels& labels = corpus::SpeakerLabels::defaults());

inline constexpr const char* kEndMarker = "(End of Conversation)";

struct SessionRound {
  std::string doctor;
  std::string patient;
};

enum class TerminatedBy { RoundCap, EndMarker, Aborted };

std::string terminated_by_name(TerminatedBy reason);
TerminatedBy terminated_by_from_name(const std::string& name);

struct Transcript {
  std::string case_id;
  std::string department;
  std::string model_id;  // doctor backend id
  std::string opening;   // patient chief complaint that seeds the session
  std::vector<SessionRound> rounds;
  TerminatedBy terminated_by = TerminatedBy::RoundCap;
  std::string error;  // populated when terminated_by == Aborted
};

nlohmann::json transcript_to_json(const Transcript& transcript);
Transcript transcript_from_json(const nlohmann::json& value);

struct SessionOptions {
  int round_cap = 5;
  std::size_t retrieve_top_n = 4;
  // Defaults to the first scripted answer (the chief complaint).
  std::optional<std::string> opening;
  std::string doctor_system_prompt =
      "You are a physician talking to a patient. Ask about symptoms, give a diagnosis and "
      "propose a treatment plan within a few rounds.";
  int max_output_tokens = 512;
};

// Raised on backend failure; carries the partial transcript.
struct SessionError : SimulatorError {
  Transcript partial;
  SessionError(const std::string& message, Transcript partial_transcript)
      : SimulatorError(message), partial(std::move(partial_transcript)) {}
};

// Doctor/patient loop at temperature 0: the doctor opens in response to the
// chief complaint; the patient answers through retrieve -> patient_prompt ->
// chat. Stops at the end marker or the round cap.
Transcript run_session(const CaseIndex& index, gateway::ChatBackend& doctor,
                       gateway::ChatBackend& patient, gateway::EmbeddingBackend& embedder,
                       const SessionOptions& options = {});

// Directory store, one JSONL file per (model, case); duplicate writes of
// identical content are no-ops.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::filesystem::path root);

  std::string put(const Transcript& transcript);
  std::vector<Transcript> list(const std::optional<std::string>& department = std::nullopt) const;
  Transcript get(const std::string& id) const;

 private:
  std::filesystem::path root_;
  std::filesystem::path file_for(const std::string& model_id, const std::string& case_id) const;
};

}  // namespace flowpref::spsim
