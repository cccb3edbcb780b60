#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medalign/error.hpp"
#include "medalign/jsonl.hpp"

namespace medalign::backend {

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct GenerationRequest {
  std::vector<ChatMessage> messages;
  int max_tokens = 512;
  double temperature = 1.0;
  double top_p = 1.0;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> seed;
  // Caller bookkeeping only; not part of the request hash.
  std::string request_id;

  static GenerationRequest from_prompt(std::string prompt);
  // Content of the last user message.
  const std::string& prompt() const;
  void validate() const;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct GenerationResponse {
  std::string text;
  Usage usage;
  double latency_ms = 0.0;
  std::string backend;
  int retries = 0;
};

enum class ErrorKind { timeout, rate_limited, server_error, client_error, parse_error, replay_miss, transport, config };

std::string_view to_string(ErrorKind kind);

class BackendError : public Error {
 public:
  BackendError(ErrorKind kind, const std::string& message, int status = 0)
      : Error(std::string(to_string(kind)) + ": " + message), kind_(kind), status_(status) {}

  ErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  bool retryable() const {
    return kind_ == ErrorKind::timeout || kind_ == ErrorKind::rate_limited || kind_ == ErrorKind::server_error ||
           kind_ == ErrorKind::transport;
  }

 private:
  ErrorKind kind_;
  int status_;
};

// Generation is thread-safe for every implementation.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
  virtual std::string tag() const = 0;
};

// Canonical JSON of the request: message contents and stop strings with
// whitespace collapsed, keys sorted, request_id left out.
json canonical_request(const GenerationRequest& request);
// SHA-256 of canonical_request().dump().
std::string request_hash(const GenerationRequest& request);

json to_json(const GenerationRequest& request);
GenerationRequest request_from_json(const json& j);
json to_json(const GenerationResponse& response);
GenerationResponse response_from_json(const json& j);

// Returns the scripted text for a known request hash, otherwise asks the
// responder; with neither, throws BackendError(config).
class MockBackend final : public Backend {
 public:
  using Responder = std::function<std::string(const GenerationRequest&)>;

  MockBackend() = default;
  explicit MockBackend(Responder responder, std::string tag = "mock");

  void script(const GenerationRequest& request, std::string text);
  void script_hash(std::string hash, std::string text);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string tag() const override { return tag_; }

 private:
  std::unordered_map<std::string, std::string> table_;
  Responder responder_;
  std::string tag_ = "mock";
  mutable std::mutex mu_;
};

// Serves responses recorded in a log, keyed by request hash.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(const std::filesystem::path& log_path);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string tag() const override { return "replay"; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, GenerationResponse> table_;
};

// Forwards to another backend and appends {"hash","request","response","ts"}
// to a JSON-lines log.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path log_path);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string tag() const override { return "record(" + inner_->tag() + ")"; }

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path log_path_;
  std::mutex mu_;
};

// Wire-level view of an HTTP exchange, so the retry policy can be exercised
// without a network.
struct HttpCall {
  std::string base_url;
  std::string path;
  std::string body;
  std::map<std::string, std::string> headers;
  int timeout_ms = 0;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

// Throws BackendError(timeout | transport) when no reply arrives.
using Transport = std::function<HttpReply(const HttpCall&)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

Transport httplib_transport();

struct BackendConfig {
  std::string kind = "mock";  // http | mock | replay | record
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "MEDALIGN_API_KEY";
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_concurrency = 4;
  std::filesystem::path log_path;
  // The wire protocol carries a sampling seed; disable for servers that reject it.
  bool send_seed = true;

  void validate() const;
};

// Delay before retry number `attempt` (0-based): base * 2^attempt * jitter,
// jitter in [0.5, 1]. The sum over max_retries attempts is at most
// base * (2^max_retries - 1).
std::chrono::milliseconds backoff_delay(int attempt, int base_ms, double jitter);

// Chat-completions client: POST {base_url}/chat/completions with
// {model, messages, temperature, top_p, max_tokens[, stop][, seed]}.
// Timeouts, 408, 429 and 5xx are retried with exponential backoff and jitter.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig cfg, Transport transport = httplib_transport(), Sleeper sleeper = {});

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string tag() const override { return "http:" + cfg_.model; }

  json request_body(const GenerationRequest& request) const;
  static GenerationResponse parse_reply(const std::string& body);

 private:
  BackendConfig cfg_;
  Transport transport_;
  Sleeper sleeper_;
  std::string api_key_;
  std::mutex rng_mu_;
  std::uint64_t jitter_state_;
};

// http / replay / record kinds. Mock backends need a responder, so they are
// built by the caller.
std::shared_ptr<Backend> make_backend(const BackendConfig& cfg);

struct BatchSlot {
  std::optional<GenerationResponse> response;
  std::optional<BackendError> error;

  bool ok() const { return response.has_value(); }
};

// At most max_concurrency requests in flight; slot i answers requests[i].
// Failures stay in their slot. Non-backend exceptions become config errors.
std::vector<BatchSlot> batch_generate(Backend& backend, const std::vector<GenerationRequest>& requests,
                                      int max_concurrency);

}  // namespace medalign::backend
