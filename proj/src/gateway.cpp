#include "flowpref/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace flowpref::gateway {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

std::string role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(const std::string& name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw std::invalid_argument("unknown chat role: " + name);
}

void ChatRequest::validate() const {
  if (messages.empty()) throw std::invalid_argument("chat request has no messages");
  if (messages.front().role == Role::Assistant) {
    throw std::invalid_argument("chat request must start with a system or user message");
  }
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (max_output_tokens <= 0) throw std::invalid_argument("max_output_tokens must be positive");
}

ChatRequest make_user_request(std::string content, double temperature, int max_output_tokens) {
  ChatRequest request;
  request.messages.push_back({Role::User, std::move(content)});
  request.temperature = temperature;
  request.max_output_tokens = max_output_tokens;
  return request;
}

json chat_request_to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& message : request.messages) {
    messages.push_back({{"role", role_name(message.role)}, {"content", message.content}});
  }
  return json{{"messages", std::move(messages)},
              {"temperature", request.temperature},
              {"max_output_tokens", request.max_output_tokens}};
}

ChatRequest chat_request_from_json(const json& value) {
  ChatRequest request;
  for (const auto& message : value.at("messages")) {
    request.messages.push_back(
        {role_from_name(message.at("role").get<std::string>()), message.at("content").get<std::string>()});
  }
  request.temperature = value.at("temperature").get<double>();
  request.max_output_tokens = value.at("max_output_tokens").get<int>();
  return request;
}

std::string canonical_request_key(const ChatRequest& request) {
  return chat_request_to_json(request).dump();
}

void BackendConfig::validate() const {
  if (endpoint.empty()) throw std::invalid_argument("backend endpoint is empty");
  if (timeout.count() <= 0) throw std::invalid_argument("backend timeout must be positive");
  if (retry.max_attempts < 1) throw std::invalid_argument("retry.max_attempts must be >= 1");
  if (requests_per_second < 0.0) throw std::invalid_argument("requests_per_second must be >= 0");
}

// ---------------------------------------------------------------------------
// Clock, sleeper, rate limiter
// ---------------------------------------------------------------------------

Clock system_clock() {
  return [] { return std::chrono::steady_clock::now(); };
}

Sleeper system_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

RateLimiter::RateLimiter(double requests_per_second, Clock clock, Sleeper sleeper)
    : capacity_(requests_per_second <= 0.0
                    ? 0
                    : std::max<std::size_t>(1, static_cast<std::size_t>(requests_per_second))),
      clock_(std::move(clock)),
      sleeper_(std::move(sleeper)) {}

void RateLimiter::acquire() {
  if (capacity_ == 0) return;
  std::unique_lock lock(mu_);
  const auto window = std::chrono::seconds(1);
  for (;;) {
    auto now = clock_();
    while (!window_.empty() && now - window_.front() >= window) window_.pop_front();
    if (window_.size() < capacity_) {
      window_.push_back(now);
      return;
    }
    auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(window_.front() + window - now);
    lock.unlock();
    sleeper_(std::max(wait, std::chrono::milliseconds(1)));
    lock.lock();
  }
}

// ---------------------------------------------------------------------------
// Mocks
// ---------------------------------------------------------------------------

ScriptedChatBackend::ScriptedChatBackend(std::map<std::string, std::string> table,
                                         std::optional<std::string> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

std::string ScriptedChatBackend::chat(const ChatRequest& request) {
  request.validate();
  std::lock_guard lock(mu_);
  ++calls_;
  if (auto it = table_.find(request.messages.back().content); it != table_.end()) return it->second;
  if (auto it = table_.find(canonical_request_key(request)); it != table_.end()) return it->second;
  if (fallback_) return *fallback_;
  throw ProtocolError("scripted backend has no entry for request");
}

std::string ScriptedChatBackend::id() const { return "scripted-chat"; }

std::size_t ScriptedChatBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_;
}

SequenceChatBackend::SequenceChatBackend(std::vector<std::string> responses, bool cycle)
    : responses_(std::move(responses)), cycle_(cycle) {
  if (responses_.empty()) throw std::invalid_argument("sequence backend needs at least one response");
}

std::string SequenceChatBackend::chat(const ChatRequest& request) {
  request.validate();
  std::lock_guard lock(mu_);
  if (next_ >= responses_.size()) {
    if (!cycle_) throw ProtocolError("sequence backend exhausted after " + std::to_string(next_) + " calls");
    next_ = 0;
  }
  return responses_[next_++];
}

std::string SequenceChatBackend::id() const { return "sequence-chat"; }

std::size_t SequenceChatBackend::call_count() const {
  std::lock_guard lock(mu_);
  return next_;
}

FailingChatBackend::FailingChatBackend(std::string message) : message_(std::move(message)) {}

std::string FailingChatBackend::chat(const ChatRequest&) { throw TransportError(message_, 1); }

std::string FailingChatBackend::id() const { return "failing-chat"; }

namespace {

std::string request_text(const ChatRequest& request) {
  std::string joined;
  for (const auto& message : request.messages) {
    joined += role_name(message.role);
    joined += '\x1f';
    joined += message.content;
    joined += '\x1e';
  }
  return joined;
}

const char* kJudgmentComments[] = {
    "The doctor ignored the rule at this stage.",
    "The doctor partially satisfied the rule.",
    "The doctor followed the rule throughout the exchange.",
    "Rule adherence is mixed in this history.",
};

const char* kMockWords[] = {"symptom", "report",  "exam",   "result", "pain",  "rest",
                            "check",   "therapy", "review", "record", "sleep", "diet"};

std::string mock_sentence(std::uint64_t h, int salt) {
  std::uint64_t state = h ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(salt + 1));
  std::string sentence;
  const int words = 3 + static_cast<int>(state % 4);
  for (int i = 0; i < words; ++i) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    if (i > 0) sentence += ' ';
    sentence += kMockWords[(state >> 33) % (sizeof(kMockWords) / sizeof(kMockWords[0]))];
  }
  sentence += '.';
  return sentence;
}

}  // namespace

HashJudgmentBackend::HashJudgmentBackend(std::uint64_t seed) : seed_(seed) {}

std::string HashJudgmentBackend::chat(const ChatRequest& request) {
  request.validate();
  std::uint64_t h = fnv1a64(request_text(request)) ^ seed_;
  int score = static_cast<int>(h % 3);
  const char* comment = kJudgmentComments[(h >> 7) % 4];
  return std::string(comment) + " Score: " + std::to_string(score) + ".";
}

std::string HashJudgmentBackend::id() const { return "hash-judgment-" + to_hex(seed_); }

HashContinuationBackend::HashContinuationBackend(std::uint64_t seed, int rounds,
                                                 std::string doctor_label, std::string patient_label)
    : seed_(seed), rounds_(rounds), doctor_label_(std::move(doctor_label)),
      patient_label_(std::move(patient_label)) {
  if (rounds_ < 1) throw std::invalid_argument("continuation rounds must be >= 1");
}

std::string HashContinuationBackend::chat(const ChatRequest& request) {
  request.validate();
  std::uint64_t h = fnv1a64(request_text(request)) ^ seed_;
  std::string out;
  for (int round = 0; round < rounds_; ++round) {
    out += doctor_label_ + ": " + mock_sentence(h, 2 * round) + "\n";
    if (round + 1 < rounds_) out += patient_label_ + ": " + mock_sentence(h, 2 * round + 1) + "\n";
  }
  return out;
}

std::string HashContinuationBackend::id() const { return "hash-continuation-" + to_hex(seed_); }

HashEmbeddingBackend::HashEmbeddingBackend(std::size_t dim, std::uint64_t seed, std::string model_id)
    : dim_(dim), seed_(seed), model_id_(std::move(model_id)) {
  if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<EmbeddingVector> HashEmbeddingBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("embedding batch is empty");
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  std::vector<EmbeddingVector> batch;
  batch.reserve(texts.size());
  for (const auto& text : texts) {
    EmbeddingVector vec;
    vec.model_id = model_id_;
    vec.values.reserve(dim_);
    std::uint64_t state = fnv1a64(text) ^ seed_;
    for (std::size_t i = 0; i < dim_; ++i) {
      state = state * 6364136223846793005ull + 1442695040888963407ull;
      vec.values.push_back(2.0 * unit_double_from_bits(state) - 1.0);
    }
    batch.push_back(std::move(vec));
  }
  validate_embedding_batch(batch, texts.size());
  return batch;
}

std::string HashEmbeddingBackend::id() const {
  return "hash-embed-" + std::to_string(dim_) + "-" + to_hex(seed_);
}

std::size_t HashEmbeddingBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// Trace record / replay
// ---------------------------------------------------------------------------

json trace_record_to_json(const TraceRecord& record) {
  return json{{"kind", record.kind},
              {"request", record.request},
              {"response", record.response},
              {"timestamp", record.timestamp},
              {"backend", record.backend}};
}

TraceRecord trace_record_from_json(const json& value) {
  TraceRecord record;
  record.kind = value.at("kind").get<std::string>();
  record.request = value.at("request");
  record.response = value.at("response");
  record.timestamp = value.at("timestamp").get<std::string>();
  record.backend = value.at("backend").get<std::string>();
  return record;
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GatewayError("cannot open trace file: " + path.string());
  std::vector<TraceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      records.push_back(trace_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ProtocolError("malformed trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& records) {
  std::ostringstream out;
  for (const auto& record : records) out << trace_record_to_json(record).dump() << '\n';
  write_text_file(path, out.str());
}

namespace {

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string embed_request_key(const std::vector<std::string>& texts) {
  return json{{"input", texts}}.dump();
}

}  // namespace

TraceWriter::TraceWriter(std::filesystem::path path, bool truncate) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, truncate ? std::ios::trunc : std::ios::app);
  if (!out) throw GatewayError("cannot open trace file for writing: " + path_.string());
}

void TraceWriter::append(const TraceRecord& record) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw GatewayError("cannot append to trace file: " + path_.string());
  out << trace_record_to_json(record).dump() << '\n';
}

RecordingChatBackend::RecordingChatBackend(std::shared_ptr<ChatBackend> inner,
                                           std::shared_ptr<TraceWriter> writer)
    : inner_(std::move(inner)), writer_(std::move(writer)) {}

std::string RecordingChatBackend::chat(const ChatRequest& request) {
  std::string response = inner_->chat(request);
  TraceRecord record;
  record.kind = "chat";
  record.request = chat_request_to_json(request);
  record.response = response;
  record.timestamp = utc_timestamp();
  record.backend = inner_->id();
  writer_->append(record);
  return response;
}

std::string RecordingChatBackend::id() const { return "recording(" + inner_->id() + ")"; }

RecordingEmbeddingBackend::RecordingEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner,
                                                     std::shared_ptr<TraceWriter> writer)
    : inner_(std::move(inner)), writer_(std::move(writer)) {}

std::vector<EmbeddingVector> RecordingEmbeddingBackend::embed(const std::vector<std::string>& texts) {
  auto batch = inner_->embed(texts);
  json vectors = json::array();
  for (const auto& vec : batch) vectors.push_back({{"values", vec.values}, {"model_id", vec.model_id}});
  TraceRecord record;
  record.kind = "embed";
  record.request = json{{"input", texts}};
  record.response = std::move(vectors);
  record.timestamp = utc_timestamp();
  record.backend = inner_->id();
  writer_->append(record);
  return batch;
}

std::string RecordingEmbeddingBackend::id() const { return "recording(" + inner_->id() + ")"; }

ReplayChatBackend::ReplayChatBackend(const std::filesystem::path& trace_path)
    : ReplayChatBackend(read_trace(trace_path)) {}

ReplayChatBackend::ReplayChatBackend(const std::vector<TraceRecord>& records) {
  for (const auto& record : records) {
    if (record.kind != "chat") continue;
    responses_[record.request.dump()].push_back(record.response.get<std::string>());
  }
}

std::string ReplayChatBackend::chat(const ChatRequest& request) {
  request.validate();
  std::string key = canonical_request_key(request);
  std::lock_guard lock(mu_);
  auto it = responses_.find(key);
  if (it == responses_.end() || it->second.empty()) {
    throw ReplayMissError("no recorded response for request", key);
  }
  std::string response = std::move(it->second.front());
  it->second.pop_front();
  return response;
}

std::string ReplayChatBackend::id() const { return "replay-chat"; }

ReplayEmbeddingBackend::ReplayEmbeddingBackend(const std::filesystem::path& trace_path)
    : ReplayEmbeddingBackend(read_trace(trace_path)) {}

ReplayEmbeddingBackend::ReplayEmbeddingBackend(const std::vector<TraceRecord>& records) {
  for (const auto& record : records) {
    if (record.kind != "embed") continue;
    responses_[record.request.dump()].push_back(record.response);
  }
}

std::vector<EmbeddingVector> ReplayEmbeddingBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("embedding batch is empty");
  std::string key = embed_request_key(texts);
  nlohmann::json stored;
  {
    std::lock_guard lock(mu_);
    auto it = responses_.find(key);
    if (it == responses_.end() || it->second.empty()) {
      throw ReplayMissError("no recorded response for embedding batch", key);
    }
    stored = std::move(it->second.front());
    it->second.pop_front();
  }
  std::vector<EmbeddingVector> batch;
  for (const auto& entry : stored) {
    EmbeddingVector vec;
    vec.values = entry.at("values").get<std::vector<double>>();
    vec.model_id = entry.at("model_id").get<std::string>();
    batch.push_back(std::move(vec));
  }
  validate_embedding_batch(batch, texts.size());
  return batch;
}

std::string ReplayEmbeddingBackend::id() const { return "replay-embed"; }

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

namespace {

struct EndpointParts {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // path prefix, no trailing slash
};

EndpointParts parse_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint missing scheme: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  EndpointParts parts;
  if (path_start == std::string::npos) {
    parts.base = endpoint;
  } else {
    parts.base = endpoint.substr(0, path_start);
    parts.prefix = endpoint.substr(path_start);
    while (!parts.prefix.empty() && parts.prefix.back() == '/') parts.prefix.pop_back();
  }
  return parts;
}

httplib::Headers auth_headers(const BackendConfig& config) {
  httplib::Headers headers;
  if (!config.auth_env.empty()) {
    if (const char* token = std::getenv(config.auth_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  return headers;
}

bool is_timeout(httplib::Error error) {
  return error == httplib::Error::ConnectionTimeout || error == httplib::Error::Read ||
         error == httplib::Error::Write;
}

// POSTs `body` with retry/backoff per config; returns the response body.
std::string post_with_retries(const BackendConfig& config, const Sleeper& sleeper,
                              RateLimiter* limiter, const std::string& path,
                              const std::string& body) {
  EndpointParts parts = parse_endpoint(config.endpoint);
  const auto timeout_sec = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto timeout_usec =
      std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - timeout_sec);

  bool last_was_timeout = false;
  int last_status = 0;
  std::string last_message;

  for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
    if (limiter) limiter->acquire();
    httplib::Client client(parts.base);
    client.set_connection_timeout(timeout_sec.count(), static_cast<long>(timeout_usec.count()));
    client.set_read_timeout(timeout_sec.count(), static_cast<long>(timeout_usec.count()));
    client.set_write_timeout(timeout_sec.count(), static_cast<long>(timeout_usec.count()));

    auto result = client.Post(parts.prefix + path, auth_headers(config), body, "application/json");
    if (result) {
      if (result->status >= 200 && result->status < 300) return result->body;
      last_status = result->status;
      last_message = "HTTP " + std::to_string(result->status) + " from " + parts.base + path;
      bool retryable = result->status == 429 || result->status >= 500;
      if (!retryable) throw HttpStatusError(last_message, result->status, attempt);
      last_was_timeout = false;
    } else {
      last_was_timeout = is_timeout(result.error());
      last_status = 0;
      last_message = "transport failure (" + httplib::to_string(result.error()) + ") to " + parts.base;
    }
    if (attempt < config.retry.max_attempts) {
      sleeper(config.retry.base_backoff * (1 << (attempt - 1)));
    }
  }

  const int attempts = config.retry.max_attempts;
  if (last_status != 0) throw HttpStatusError(last_message + " after " + std::to_string(attempts) + " attempts", last_status, attempts);
  if (last_was_timeout) throw TimeoutError(last_message + " after " + std::to_string(attempts) + " attempts", attempts);
  throw TransportError(last_message + " after " + std::to_string(attempts) + " attempts", attempts);
}

std::shared_ptr<RateLimiter> make_limiter(const BackendConfig& config, const Clock& clock,
                                          const Sleeper& sleeper) {
  if (config.requests_per_second <= 0.0) return nullptr;
  return std::make_shared<RateLimiter>(config.requests_per_second, clock, sleeper);
}

}  // namespace

HttpChatBackend::HttpChatBackend(BackendConfig config, Clock clock, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  config_.validate();
  limiter_ = make_limiter(config_, clock, sleeper_);
}

std::string HttpChatBackend::chat(const ChatRequest& request) {
  request.validate();
  json messages = json::array();
  for (const auto& message : request.messages) {
    messages.push_back({{"role", role_name(message.role)}, {"content", message.content}});
  }
  json body{{"model", config_.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
  std::string raw =
      post_with_retries(config_, sleeper_, limiter_.get(), "/chat/completions", body.dump());
  try {
    json parsed = json::parse(raw);
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed chat-completions response: ") + e.what());
  }
}

std::string HttpChatBackend::id() const { return "http-chat:" + config_.model + "@" + config_.endpoint; }

HttpEmbeddingBackend::HttpEmbeddingBackend(BackendConfig config, Clock clock, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  config_.validate();
  limiter_ = make_limiter(config_, clock, sleeper_);
}

std::vector<EmbeddingVector> HttpEmbeddingBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("embedding batch is empty");
  json body{{"model", config_.model}, {"input", texts}};
  std::string raw = post_with_retries(config_, sleeper_, limiter_.get(), "/embeddings", body.dump());
  std::vector<EmbeddingVector> batch(texts.size());
  try {
    json parsed = json::parse(raw);
    std::string model = parsed.value("model", config_.model);
    const auto& data = parsed.at("data");
    if (data.size() != texts.size()) {
      throw ProtocolError("embeddings response count mismatch: got " + std::to_string(data.size()) +
                          ", expected " + std::to_string(texts.size()));
    }
    for (const auto& entry : data) {
      std::size_t index = entry.value("index", batch.size());
      if (index >= batch.size()) throw ProtocolError("embeddings response index out of range");
      batch[index].values = entry.at("embedding").get<std::vector<double>>();
      batch[index].model_id = model;
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed embeddings response: ") + e.what());
  }
  validate_embedding_batch(batch, texts.size());
  return batch;
}

std::string HttpEmbeddingBackend::id() const {
  return "http-embed:" + config_.model + "@" + config_.endpoint;
}

// ---------------------------------------------------------------------------
// Token counting
// ---------------------------------------------------------------------------

namespace {

bool is_cjk(char32_t cp) {
  return (cp >= 0x2E80 && cp <= 0x9FFF) ||   // radicals, kana, unified ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||   // extension A
         (cp >= 0xF900 && cp <= 0xFAFF) ||   // compatibility ideographs
         (cp >= 0xFF00 && cp <= 0xFFEF);     // fullwidth forms
}

}  // namespace

std::size_t count_tokens_whitespace_cjk(std::string_view text) {
  std::size_t tokens = 0;
  bool in_run = false;
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
    if (cp < 0x80 && std::isspace(static_cast<int>(cp))) {
      in_run = false;
    } else if (is_cjk(cp)) {
      ++tokens;
      in_run = false;
    } else {
      if (!in_run) ++tokens;
      in_run = true;
    }
    i += len;
  }
  return tokens;
}

TokenCounter default_token_counter() {
  return [](std::string_view text) { return count_tokens_whitespace_cjk(text); };
}

void validate_embedding_batch(const std::vector<EmbeddingVector>& batch, std::size_t expected_count) {
  if (batch.size() != expected_count) {
    throw ProtocolError("embedding batch size mismatch: got " + std::to_string(batch.size()) +
                        ", expected " + std::to_string(expected_count));
  }
  for (const auto& vec : batch) {
    if (vec.values.empty()) throw ProtocolError("embedding vector is empty");
    if (vec.values.size() != batch.front().values.size()) {
      throw ProtocolError("embedding dimension mismatch across batch");
    }
    for (double v : vec.values) {
      if (!std::isfinite(v)) throw ProtocolError("embedding vector contains a non-finite value");
    }
  }
}

}  // namespace flowpref::gateway
