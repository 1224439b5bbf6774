#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowpref/util.hpp"

namespace flowpref::gateway {

// ---------------------------------------------------------------------------
// Requests and responses
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

std::string role_name(Role role);
Role role_from_name(const std::string& name);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  // Throws std::invalid_argument when messages are empty or the first
  // message is an assistant turn.
  void validate() const;
};

ChatRequest make_user_request(std::string content, double temperature = 0.0,
                              int max_output_tokens = 1024);

nlohmann::json chat_request_to_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const nlohmann::json& value);

// Canonical string form used as the match key for replay and mock tables.
std::string canonical_request_key(const ChatRequest& request);

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

// ---------------------------------------------------------------------------
// Backend configuration
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{100};
};

struct BackendConfig {
  std::string endpoint;  // e.g. https://host:port/v1
  std::string model;
  std::string auth_env;  // name of the env var holding the bearer token
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
  double requests_per_second = 0.0;  // 0 disables the limiter

  void validate() const;
};

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimeoutError : GatewayError {
  int attempts;
  TimeoutError(const std::string& message, int attempts_used)
      : GatewayError(message), attempts(attempts_used) {}
};

struct TransportError : GatewayError {
  int attempts;
  TransportError(const std::string& message, int attempts_used)
      : GatewayError(message), attempts(attempts_used) {}
};

struct HttpStatusError : GatewayError {
  int status;
  int attempts;
  HttpStatusError(const std::string& message, int status_code, int attempts_used)
      : GatewayError(message), status(status_code), attempts(attempts_used) {}
};

struct ProtocolError : GatewayError {
  using GatewayError::GatewayError;
};

struct ReplayMissError : GatewayError {
  std::string request_key;
  ReplayMissError(const std::string& message, std::string key)
      : GatewayError(message), request_key(std::move(key)) {}
};

// ---------------------------------------------------------------------------
// Clock and sleep injection (tests use a fake clock)
// ---------------------------------------------------------------------------

using Clock = std::function<std::chrono::steady_clock::time_point()>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

Clock system_clock();
Sleeper system_sleeper();

// Sliding one-second window limiter. Thread-safe.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second, Clock clock = system_clock(),
                       Sleeper sleeper = system_sleeper());

  // Blocks (via the sleeper) until issuing one more request keeps the
  // current one-second window within the configured budget.
  void acquire();

 private:
  std::size_t capacity_;
  Clock clock_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::deque<std::chrono::steady_clock::time_point> window_;
};

// ---------------------------------------------------------------------------
// Backend interfaces
// ---------------------------------------------------------------------------

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  // Throws std::invalid_argument on an empty batch; every returned vector
  // has the same dimension.
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

// Table lookup keyed on the last message content (falls back to the full
// canonical request key, then to the configured fallback).
class ScriptedChatBackend : public ChatBackend {
 public:
  explicit ScriptedChatBackend(std::map<std::string, std::string> table,
                               std::optional<std::string> fallback = std::nullopt);
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;
  std::size_t call_count() const;

 private:
  std::map<std::string, std::string> table_;
  std::optional<std::string> fallback_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

// Serves responses in FIFO order regardless of the request.
class SequenceChatBackend : public ChatBackend {
 public:
  explicit SequenceChatBackend(std::vector<std::string> responses, bool cycle = false);
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;
  std::size_t call_count() const;

 private:
  std::vector<std::string> responses_;
  bool cycle_;
  mutable std::mutex mu_;
  std::size_t next_ = 0;
};

// Always throws; used to exercise failure paths.
class FailingChatBackend : public ChatBackend {
 public:
  explicit FailingChatBackend(std::string message = "scripted failure");
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  std::string message_;
};

// Emits "<comment> Score: <n>." where n in {0,1,2} is derived from the
// prompt hash. Stateless, so identical prompts always score identically.
class HashJudgmentBackend : public ChatBackend {
 public:
  explicit HashJudgmentBackend(std::uint64_t seed = 0);
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  std::uint64_t seed_;
};

// Emits a labelled doctor/patient continuation derived from the prompt hash.
class HashContinuationBackend : public ChatBackend {
 public:
  explicit HashContinuationBackend(std::uint64_t seed = 0, int rounds = 3,
                                   std::string doctor_label = "Doctor",
                                   std::string patient_label = "Patient");
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  std::uint64_t seed_;
  int rounds_;
  std::string doctor_label_;
  std::string patient_label_;
};

// Hash-to-vector scheme: component i of the embedding for text T is drawn
// from a generator seeded with fnv1a64(T) ^ seed, mapped into [-1, 1).
// Identical texts therefore embed identically across runs and platforms.
class HashEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HashEmbeddingBackend(std::size_t dim = 16, std::uint64_t seed = 0,
                                std::string model_id = "hash-embed");
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string id() const override;
  std::size_t call_count() const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::string model_id_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Trace record / replay
// ---------------------------------------------------------------------------

struct TraceRecord {
  std::string kind;  // "chat" | "embed"
  nlohmann::json request;
  nlohmann::json response;
  std::string timestamp;
  std::string backend;
};

nlohmann::json trace_record_to_json(const TraceRecord& record);
TraceRecord trace_record_from_json(const nlohmann::json& value);

std::vector<TraceRecord> read_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& records);

// Append-only line-delimited JSON writer. Thread-safe.
class TraceWriter {
 public:
  explicit TraceWriter(std::filesystem::path path, bool truncate = true);
  void append(const TraceRecord& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

class RecordingChatBackend : public ChatBackend {
 public:
  RecordingChatBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<TraceWriter> writer);
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<TraceWriter> writer_;
};

class RecordingEmbeddingBackend : public EmbeddingBackend {
 public:
  RecordingEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner,
                            std::shared_ptr<TraceWriter> writer);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string id() const override;

 private:
  std::shared_ptr<EmbeddingBackend> inner_;
  std::shared_ptr<TraceWriter> writer_;
};

// Serves recorded responses byte-exactly; identical requests are replayed
// in recording order. An unmatched request raises ReplayMissError.
class ReplayChatBackend : public ChatBackend {
 public:
  explicit ReplayChatBackend(const std::filesystem::path& trace_path);
  explicit ReplayChatBackend(const std::vector<TraceRecord>& records);
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  std::mutex mu_;
  std::map<std::string, std::deque<std::string>> responses_;
};

class ReplayEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit ReplayEmbeddingBackend(const std::filesystem::path& trace_path);
  explicit ReplayEmbeddingBackend(const std::vector<TraceRecord>& records);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string id() const override;

 private:
  std::mutex mu_;
  std::map<std::string, std::deque<nlohmann::json>> responses_;
};

// ---------------------------------------------------------------------------
// HTTP backends (OpenAI-compatible chat-completions / embeddings protocol)
// ---------------------------------------------------------------------------

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendConfig config, Clock clock = system_clock(),
                           Sleeper sleeper = system_sleeper());
  std::string chat(const ChatRequest& request) override;
  std::string id() const override;

 private:
  BackendConfig config_;
  Sleeper sleeper_;
  std::shared_ptr<RateLimiter> limiter_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(BackendConfig config, Clock clock = system_clock(),
                                Sleeper sleeper = system_sleeper());
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string id() const override;

 private:
  BackendConfig config_;
  Sleeper sleeper_;
  std::shared_ptr<RateLimiter> limiter_;
};

// ---------------------------------------------------------------------------
// Token counting heuristic
// ---------------------------------------------------------------------------

using TokenCounter = std::function<std::size_t(std::string_view)>;

// Whitespace-separated runs count one token each; every CJK codepoint
// counts as its own token. Pluggable for exact tokenizers.
std::size_t count_tokens_whitespace_cjk(std::string_view text);
TokenCounter default_token_counter();

// Shared batch check: one vector per input, uniform dimension.
void validate_embedding_batch(const std::vector<EmbeddingVector>& batch, std::size_t expected_count);

}  // namespace flowpref::gateway
