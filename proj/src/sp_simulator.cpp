#include "flowpref/sp_simulator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowpref/util.hpp"

namespace flowpref::spsim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

namespace {

struct Segment {
  std::size_t begin;
  std::size_t end;
};

// Whitespace-delimited runs, with every CJK codepoint as its own segment.
std::vector<Segment> segment_text(std::string_view text) {
  std::vector<Segment> segments;
  std::size_t run_start = std::string_view::npos;
  auto flush_run = [&](std::size_t end) {
    if (run_start != std::string_view::npos) {
      segments.push_back({run_start, end});
      run_start = std::string_view::npos;
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if ((c & 0xE0u) == 0xC0u && i + 1 < text.size()) {
      len = 2;
      cp = static_cast<char32_t>((c & 0x1Fu) << 6 | (text[i + 1] & 0x3F));
    } else if ((c & 0xF0u) == 0xE0u && i + 2 < text.size()) {
      len = 3;
      cp = static_cast<char32_t>((c & 0x0Fu) << 12 | (text[i + 1] & 0x3F) << 6 | (text[i + 2] & 0x3F));
    } else if ((c & 0xF8u) == 0xF0u && i + 3 < text.size()) {
      len = 4;
      cp = static_cast<char32_t>((c & 0x07u) << 18 | (text[i + 1] & 0x3F) << 12 |
                                 (text[i + 2] & 0x3F) << 6 | (text[i + 3] & 0x3F));
    }
    const bool space = cp < 0x80 && std::isspace(static_cast<int>(cp));
    const bool cjk = (cp >= 0x2E80 && cp <= 0x9FFF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
                     (cp >= 0xFF00 && cp <= 0xFFEF);
    if (space) {
      flush_run(i);
    } else if (cjk) {
      flush_run(i);
      segments.push_back({i, i + len});
    } else if (run_start == std::string_view::npos) {
      run_start = i;
    }
    i += len;
  }
  flush_run(text.size());
  return segments;
}

}  // namespace

std::vector<std::string> split_to_chunks(const std::string& text, const ChunkingOptions& options) {
  if (options.max_tokens == 0) throw SimulatorError("chunk budget must be positive");
  const auto segments = segment_text(text);
  std::vector<std::string> chunks;
  std::size_t chunk_begin = std::string_view::npos;
  std::size_t chunk_end = 0;

  auto emit = [&]() {
    if (chunk_begin == std::string_view::npos) return;
    chunks.push_back(text.substr(chunk_begin, chunk_end - chunk_begin));
    chunk_begin = std::string_view::npos;
  };

  for (const auto& segment : segments) {
    if (chunk_begin == std::string_view::npos) {
      std::string piece = text.substr(segment.begin, segment.end - segment.begin);
      if (options.counter(piece) > options.max_tokens) {
        throw SimulatorError("text piece exceeds the chunk budget after maximal splitting: " +
                             piece.substr(0, 40));
      }
      chunk_begin = segment.begin;
      chunk_end = segment.end;
      continue;
    }
    std::string candidate = text.substr(chunk_begin, segment.end - chunk_begin);
    if (options.counter(candidate) <= options.max_tokens) {
      chunk_end = segment.end;
    } else {
      emit();
      std::string piece = text.substr(segment.begin, segment.end - segment.begin);
      if (options.counter(piece) > options.max_tokens) {
        throw SimulatorError("text piece exceeds the chunk budget after maximal splitting: " +
                             piece.substr(0, 40));
      }
      chunk_begin = segment.begin;
      chunk_end = segment.end;
    }
  }
  emit();
  return chunks;
}

// ---------------------------------------------------------------------------
// Case ingestion
// ---------------------------------------------------------------------------

PatientCase load_case_bundle(const std::filesystem::path& bundle_dir) {
  const auto info_path = bundle_dir / "info.txt";
  const auto script_path = bundle_dir / "script.jsonl";
  const auto checklist_path = bundle_dir / "checklist.json";
  for (const auto& required : {info_path, script_path, checklist_path}) {
    if (!std::filesystem::exists(required)) {
      throw SimulatorError("case bundle is missing " + required.string());
    }
  }

  PatientCase patient;
  patient.id = bundle_dir.filename().string();
  patient.patient_info = read_text_file(info_path);

  std::ifstream script_in(script_path);
  std::string line;
  while (std::getline(script_in, line)) {
    if (trim(line).empty()) continue;
    json value = json::parse(line);
    patient.script.push_back(
        {value.at("question").get<std::string>(), value.at("answer").get<std::string>()});
  }
  if (patient.script.empty()) throw SimulatorError("case " + patient.id + " has an empty script");

  json checklist_json = json::parse(read_text_file(checklist_path));
  patient.checklist = checklist::checklist_from_json(checklist_json);
  patient.department = checklist_json.value("department", "unknown");
  return patient;
}

CaseIndex build_index(PatientCase patient, gateway::EmbeddingBackend& embedder,
                      const ChunkingOptions& options) {
  std::vector<std::string> texts;
  std::vector<ChunkSource> sources;
  for (const auto& piece : split_to_chunks(patient.patient_info, options)) {
    texts.push_back(piece);
    sources.push_back(ChunkSource::Info);
  }
  for (const auto& qa : patient.script) {
    std::string serialized = "Q: " + qa.question + "\nA: " + qa.answer;
    if (options.counter(serialized) <= options.max_tokens) {
      texts.push_back(serialized);
      sources.push_back(ChunkSource::Script);
    } else {
      for (const auto& piece : split_to_chunks(serialized, options)) {
        texts.push_back(piece);
        sources.push_back(ChunkSource::Script);
      }
    }
  }
  if (texts.empty()) throw SimulatorError("case " + patient.id + " produced no chunks");

  auto embeddings = embedder.embed(texts);
  CaseIndex index;
  index.chunks.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Chunk chunk;
    chunk.id = static_cast<int>(i);
    chunk.case_id = patient.id;
    chunk.source = sources[i];
    chunk.text = std::move(texts[i]);
    chunk.embedding = std::move(embeddings[i]);
    index.chunks.push_back(std::move(chunk));
  }
  index.patient = std::move(patient);
  return index;
}

CaseIndex ingest_case(const std::filesystem::path& bundle_dir, gateway::EmbeddingBackend& embedder,
                      const ChunkingOptions& options) {
  return build_index(load_case_bundle(bundle_dir), embedder, options);
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw SimulatorError("cosine similarity needs equal, non-zero dimensions");
  }
  double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    norm_a += a[i] * a[i];
    norm_b += b[i] * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

std::vector<Chunk> retrieve(const CaseIndex& index, const std::string& query,
                            gateway::EmbeddingBackend& embedder, std::size_t top_n) {
  if (index.chunks.empty()) throw SimulatorError("case index is empty");
  auto query_embedding = embedder.embed({query}).front();

  std::vector<std::pair<double, const Chunk*>> ranked;
  ranked.reserve(index.chunks.size());
  for (const auto& chunk : index.chunks) {
    ranked.emplace_back(cosine_similarity(query_embedding.values, chunk.embedding.values), &chunk);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second->id < y.second->id;
  });

  std::vector<Chunk> result;
  for (std::size_t i = 0; i < ranked.size() && i < top_n; ++i) result.push_back(*ranked[i].second);
  return result;
}

std::string last_rounds_text(std::span<const corpus::Turn> turns, int rounds,
                             const corpus::SpeakerLabels& labels) {
  if (turns.empty()) return "";
  int doctor_seen = 0;
  std::size_t start = 0;
  for (std::size_t i = turns.size(); i-- > 0;) {
    if (turns[i].speaker == corpus::Speaker::Doctor) {
      ++doctor_seen;
      if (doctor_seen == rounds) {
        start = i;
        break;
      }
    }
  }
  return corpus::serialize_turns(turns.subspan(start), labels);
}

// ---------------------------------------------------------------------------
// Patient prompt and session loop
// ---------------------------------------------------------------------------

std::string patient_prompt(std::span<const Chunk> retrieved, std::span<const corpus::Turn> history,
                           const std::string& doctor_msg, const corpus::SpeakerLabels& labels) {
  std::string documents;
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    if (i > 0) documents += '\n';
    documents += retrieved[i].text;
  }
  std::string prompt;
  prompt += "Please play the role of a patient who interacts with a doctor. You need to fulfill "
            "the following requirements:\n";
  prompt += "1. If the doctor asks a question, answer it based on the contents of the knowledge "
            "base and the history of the conversation, with a response of no more than two "
            "sentences.\n";
  prompt += "2. If your doctor recommends a test, inform him of the results. If you have not "
            "undergone the test, simply state that you are unaware of the results.\n";
  prompt += "3. Do not expose any information about yourself to the doctor unless the doctor "
            "takes the initiative to ask a question, please be passive and accept the doctor's "
            "guidance.\n";
  prompt += "4. If the doctor does not ask questions, ask the doctor what disease you have and "
            "how it should be treated.\n";
  prompt += "5. When you feel that the conversation should end, please output: (End of "
            "Conversation).\n";
  prompt += "\n";
  prompt += "Knowledge Base: " + documents + "\n";
  prompt += "Conversation history: " + corpus::serialize_turns(history, labels) + "\n";
  prompt += "Doctor: " + doctor_msg + "\n";
  prompt += "Your response:";
  return prompt;
}

std::string terminated_by_name(TerminatedBy reason) {
  switch (reason) {
    case TerminatedBy::RoundCap: return "round_cap";
    case TerminatedBy::EndMarker: return "end_marker";
    case TerminatedBy::Aborted: return "aborted";
  }
  return "round_cap";
}

TerminatedBy terminated_by_from_name(const std::string& name) {
  if (name == "round_cap") return TerminatedBy::RoundCap;
  if (name == "end_marker") return TerminatedBy::EndMarker;
  if (name == "aborted") return TerminatedBy::Aborted;
  throw SimulatorError("unknown termination reason: " + name);
}

json transcript_to_json(const Transcript& transcript) {
  json rounds = json::array();
  for (const auto& round : transcript.rounds) {
    rounds.push_back({{"doctor", round.doctor}, {"patient", round.patient}});
  }
  return json{{"case_id", transcript.case_id},
              {"department", transcript.department},
              {"model_id", transcript.model_id},
              {"opening", transcript.opening},
              {"rounds", std::move(rounds)},
              {"terminated_by", terminated_by_name(transcript.terminated_by)},
              {"error", transcript.error}};
}

Transcript transcript_from_json(const json& value) {
  Transcript transcript;
  transcript.case_id = value.at("case_id").get<std::string>();
  transcript.department = value.at("department").get<std::string>();
  transcript.model_id = value.at("model_id").get<std::string>();
  transcript.opening = value.at("opening").get<std::string>();
  for (const auto& round : value.at("rounds")) {
    transcript.rounds.push_back(
        {round.at("doctor").get<std::string>(), round.at("patient").get<std::string>()});
  }
  transcript.terminated_by = terminated_by_from_name(value.at("terminated_by").get<std::string>());
  transcript.error = value.value("error", "");
  return transcript;
}

Transcript run_session(const CaseIndex& index, gateway::ChatBackend& doctor,
                       gateway::ChatBackend& patient, gateway::EmbeddingBackend& embedder,
                       const SessionOptions& options) {
  if (options.round_cap < 1) throw SimulatorError("round cap must be >= 1");

  Transcript transcript;
  transcript.case_id = index.patient.id;
  transcript.department = index.patient.department;
  transcript.model_id = doctor.id();
  transcript.opening =
      options.opening.value_or(index.patient.script.empty() ? "" : index.patient.script.front().answer);
  if (transcript.opening.empty()) throw SimulatorError("no opening utterance available");

  gateway::ChatRequest doctor_request;
  doctor_request.temperature = 0.0;
  doctor_request.max_output_tokens = options.max_output_tokens;
  doctor_request.messages.push_back({gateway::Role::System, options.doctor_system_prompt});
  doctor_request.messages.push_back({gateway::Role::User, transcript.opening});

  std::vector<corpus::Turn> turns{{corpus::Speaker::Patient, transcript.opening}};

  try {
    for (int round = 0; round < options.round_cap; ++round) {
      std::string doctor_msg = doctor.chat(doctor_request);
      doctor_request.messages.push_back({gateway::Role::Assistant, doctor_msg});
      turns.push_back({corpus::Speaker::Doctor, doctor_msg});

      std::string query = last_rounds_text(turns, 2);
      auto retrieved = retrieve(index, query, embedder, options.retrieve_top_n);
      std::string prompt = patient_prompt(
          retrieved, std::span(turns.data(), turns.size() - 1), doctor_msg);
      std::string patient_msg =
          patient.chat(gateway::make_user_request(prompt, 0.0, options.max_output_tokens));

      transcript.rounds.push_back({doctor_msg, patient_msg});
      turns.push_back({corpus::Speaker::Patient, patient_msg});
      doctor_request.messages.push_back({gateway::Role::User, patient_msg});

      if (contains(patient_msg, kEndMarker)) {
        transcript.terminated_by = TerminatedBy::EndMarker;
        return transcript;
      }
    }
  } catch (const gateway::GatewayError& e) {
    transcript.terminated_by = TerminatedBy::Aborted;
    transcript.error = e.what();
    throw SessionError("session aborted for case " + transcript.case_id + ": " + e.what(),
                       transcript);
  }
  transcript.terminated_by = TerminatedBy::RoundCap;
  return transcript;
}

// ---------------------------------------------------------------------------
// Transcript store
// ---------------------------------------------------------------------------

namespace {

std::string sanitize(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  }
  return out.empty() ? "_" : out;
}

}  // namespace

TranscriptStore::TranscriptStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path TranscriptStore::file_for(const std::string& model_id,
                                                const std::string& case_id) const {
  return root_ / sanitize(model_id) / (sanitize(case_id) + ".jsonl");
}

std::string TranscriptStore::put(const Transcript& transcript) {
  const auto path = file_for(transcript.model_id, transcript.case_id);
  std::filesystem::create_directories(path.parent_path());
  const std::string line = transcript_to_json(transcript).dump();

  std::size_t index = 0;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string existing;
    while (std::getline(in, existing)) {
      if (existing == line) {
        return sanitize(transcript.model_id) + "/" + sanitize(transcript.case_id) + "#" +
               std::to_string(index);
      }
      ++index;
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw SimulatorError("cannot append transcript to " + path.string());
  out << line << '\n';
  return sanitize(transcript.model_id) + "/" + sanitize(transcript.case_id) + "#" +
         std::to_string(index);
}

std::vector<Transcript> TranscriptStore::list(const std::optional<std::string>& department) const {
  std::vector<Transcript> transcripts;
  if (!std::filesystem::exists(root_)) return transcripts;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      Transcript transcript = transcript_from_json(json::parse(line));
      if (!department || transcript.department == *department) {
        transcripts.push_back(std::move(transcript));
      }
    }
  }
  return transcripts;
}

Transcript TranscriptStore::get(const std::string& id) const {
  const auto hash_pos = id.rfind('#');
  const auto slash_pos = id.find('/');
  if (hash_pos == std::string::npos || slash_pos == std::string::npos || slash_pos > hash_pos) {
    throw SimulatorError("malformed transcript id: " + id);
  }
  const std::string model = id.substr(0, slash_pos);
  const std::string case_id = id.substr(slash_pos + 1, hash_pos - slash_pos - 1);
  const std::size_t index = std::stoul(id.substr(hash_pos + 1));

  const auto path = root_ / model / (case_id + ".jsonl");
  std::ifstream in(path);
  if (!in) throw SimulatorError("no transcript file for id: " + id);
  std::string line;
  std::size_t current = 0;
  while (std::getline(in, line)) {
    if (current == index) return transcript_from_json(json::parse(line));
    ++current;
  }
  throw SimulatorError("transcript index out of range for id: " + id);
}

}  // namespace flowpref::spsim
