#include "medalign/backend.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "medalign/digest.hpp"
#include "medalign/text.hpp"

namespace medalign::backend {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::rate_limited: return "rate_limited";
    case ErrorKind::server_error: return "server_error";
    case ErrorKind::client_error: return "client_error";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::replay_miss: return "replay_miss";
    case ErrorKind::transport: return "transport";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

GenerationRequest GenerationRequest::from_prompt(std::string prompt) {
  GenerationRequest r;
  r.messages.push_back({"user", std::move(prompt)});
  return r;
}

const std::string& GenerationRequest::prompt() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  static const std::string kEmpty;
  return messages.empty() ? kEmpty : messages.back().content;
}

void GenerationRequest::validate() const {
  if (messages.empty()) throw BackendError(ErrorKind::config, "request has no messages");
  if (max_tokens < 1) throw BackendError(ErrorKind::config, "max_tokens must be >= 1");
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw BackendError(ErrorKind::config, "top_p must lie in [0, 1]");
  if (!(temperature >= 0.0)) throw BackendError(ErrorKind::config, "temperature must be >= 0");
}

json canonical_request(const GenerationRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"content", text::collapse_whitespace(m.content)}, {"role", m.role}});
  }
  json stop = json::array();
  for (const auto& s : request.stop) stop.push_back(text::collapse_whitespace(s));
  json j = {{"max_tokens", request.max_tokens},
            {"messages", std::move(messages)},
            {"stop", std::move(stop)},
            {"temperature", request.temperature},
            {"top_p", request.top_p}};
  j["seed"] = request.seed ? json(*request.seed) : json(nullptr);
  return j;
}

std::string request_hash(const GenerationRequest& request) { return sha256_hex(canonical_request(request).dump()); }

json to_json(const GenerationRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json j = {{"messages", std::move(messages)},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature},
            {"top_p", request.top_p},
            {"stop", request.stop}};
  if (request.seed) j["seed"] = *request.seed;
  if (!request.request_id.empty()) j["request_id"] = request.request_id;
  return j;
}

GenerationRequest request_from_json(const json& j) {
  GenerationRequest r;
  for (const auto& m : require_field(j, "messages")) r.messages.push_back({require_string(m, "role"), require_string(m, "content")});
  r.max_tokens = j.value("max_tokens", r.max_tokens);
  r.temperature = j.value("temperature", r.temperature);
  r.top_p = j.value("top_p", r.top_p);
  if (auto it = j.find("stop"); it != j.end()) r.stop = it->get<std::vector<std::string>>();
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) r.seed = it->get<std::uint64_t>();
  r.request_id = j.value("request_id", std::string{});
  return r;
}

json to_json(const GenerationResponse& response) {
  return {{"text", response.text},
          {"usage", {{"prompt_tokens", response.usage.prompt_tokens}, {"completion_tokens", response.usage.completion_tokens}}},
          {"latency_ms", response.latency_ms},
          {"backend", response.backend},
          {"retries", response.retries}};
}

GenerationResponse response_from_json(const json& j) {
  GenerationResponse r;
  r.text = require_string(j, "text");
  if (auto it = j.find("usage"); it != j.end()) {
    r.usage.prompt_tokens = it->value("prompt_tokens", 0);
    r.usage.completion_tokens = it->value("completion_tokens", 0);
  }
  r.latency_ms = j.value("latency_ms", 0.0);
  r.backend = j.value("backend", std::string{});
  r.retries = j.value("retries", 0);
  return r;
}

MockBackend::MockBackend(Responder responder, std::string tag) : responder_(std::move(responder)), tag_(std::move(tag)) {}

void MockBackend::script(const GenerationRequest& request, std::string text) {
  script_hash(request_hash(request), std::move(text));
}

void MockBackend::script_hash(std::string hash, std::string text) {
  std::lock_guard lock(mu_);
  table_[std::move(hash)] = std::move(text);
}

GenerationResponse MockBackend::generate(const GenerationRequest& request) {
  request.validate();
  GenerationResponse out;
  out.backend = tag_;
  bool scripted = false;
  {
    std::lock_guard lock(mu_);
    if (auto it = table_.find(request_hash(request)); it != table_.end()) {
      out.text = it->second;
      scripted = true;
    }
  }
  if (!scripted) {
    if (!responder_) throw BackendError(ErrorKind::config, "mock backend has no response for this request");
    out.text = responder_(request);
  }
  out.usage.prompt_tokens = static_cast<int>(text::count_code_points(request.prompt()));
  out.usage.completion_tokens = static_cast<int>(text::count_code_points(out.text));
  return out;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& log_path) {
  if (!std::filesystem::exists(log_path)) throw BackendError(ErrorKind::config, "replay log not found: " + log_path.string());
  for (const auto& entry : read_jsonl_values(log_path)) {
    table_.try_emplace(require_string(entry, "hash"), response_from_json(require_field(entry, "response")));
  }
}

GenerationResponse ReplayBackend::generate(const GenerationRequest& request) {
  auto it = table_.find(request_hash(request));
  if (it == table_.end()) throw BackendError(ErrorKind::replay_miss, "no recorded response for request " + request_hash(request));
  return it->second;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path log_path)
    : inner_(std::move(inner)), log_path_(std::move(log_path)) {
  if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
}

GenerationResponse RecordingBackend::generate(const GenerationRequest& request) {
  GenerationResponse response = inner_->generate(request);
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  json entry = {{"hash", request_hash(request)},
                {"request", to_json(request)},
                {"response", to_json(response)},
                {"ts", ts.str()}};
  std::lock_guard lock(mu_);
  std::ofstream out(log_path_, std::ios::app | std::ios::binary);
  if (!out) throw BackendError(ErrorKind::config, "cannot append to record log " + log_path_.string());
  out << entry.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  return response;
}

void BackendConfig::validate() const {
  if (kind != "http" && kind != "mock" && kind != "replay" && kind != "record") {
    throw UsageError("unknown backend kind \"" + kind + "\"");
  }
  if (max_retries < 0) throw UsageError("max_retries must be >= 0");
  if (max_concurrency < 1) throw UsageError("max_concurrency must be >= 1");
  if (timeout_ms < 1) throw UsageError("timeout_ms must be >= 1");
  if (backoff_base_ms < 0) throw UsageError("backoff_base_ms must be >= 0");
  if ((kind == "replay" || kind == "record") && log_path.empty()) {
    throw UsageError("backend kind " + kind + " needs a log path");
  }
}

std::chrono::milliseconds backoff_delay(int attempt, int base_ms, double jitter) {
  jitter = std::clamp(jitter, 0.5, 1.0);
  const double ms = static_cast<double>(base_ms) * std::ldexp(1.0, attempt) * jitter;
  return std::chrono::milliseconds(static_cast<long long>(std::floor(ms)));
}

std::shared_ptr<Backend> make_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "http") return std::make_shared<HttpBackend>(cfg);
  if (cfg.kind == "replay") return std::make_shared<ReplayBackend>(cfg.log_path);
  if (cfg.kind == "record") return std::make_shared<RecordingBackend>(std::make_shared<HttpBackend>(cfg), cfg.log_path);
  throw UsageError("mock backends are constructed with a responder");
}

std::vector<BatchSlot> batch_generate(Backend& backend, const std::vector<GenerationRequest>& requests,
                                      int max_concurrency) {
  std::vector<BatchSlot> slots(requests.size());
  if (requests.empty()) return slots;
  const auto workers = static_cast<std::size_t>(std::max(1, max_concurrency));
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      try {
        slots[i].response = backend.generate(requests[i]);
      } catch (const BackendError& e) {
        slots[i].error = e;
      } catch (const std::exception& e) {
        slots[i].error = BackendError(ErrorKind::config, e.what());
      }
    }
  };

  const std::size_t n_threads = std::min(workers, requests.size());
  if (n_threads == 1) {
    work();
    return slots;
  }
  std::vector<std::jthread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  pool.clear();  // joins
  return slots;
}

}  // namespace medalign::backend
