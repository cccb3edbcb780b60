#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

#include "medalign/backend.hpp"
#include "medalign/random.hpp"

namespace medalign::backend {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path below the origin, without trailing slash
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw BackendError(ErrorKind::config, "base_url needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

ErrorKind classify_status(int status) {
  if (status == 408) return ErrorKind::timeout;
  if (status == 429) return ErrorKind::rate_limited;
  if (status >= 500) return ErrorKind::server_error;
  return ErrorKind::client_error;
}

}  // namespace

Transport httplib_transport() {
  return [](const HttpCall& call) -> HttpReply {
    httplib::Client client(call.base_url);
    const auto timeout = std::chrono::milliseconds(call.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    for (const auto& [k, v] : call.headers) headers.emplace(k, v);
    auto res = client.Post(call.path, headers, call.body, "application/json");
    if (!res) {
      const auto err = res.error();
      const auto kind = err == httplib::Error::Read || err == httplib::Error::Write ||
                                err == httplib::Error::ConnectionTimeout
                            ? ErrorKind::timeout
                            : ErrorKind::transport;
      throw BackendError(kind, "HTTP request failed: " + httplib::to_string(err));
    }
    return {res->status, res->body};
  };
}

HttpBackend::HttpBackend(BackendConfig cfg, Transport transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
  jitter_state_ = static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
}

json HttpBackend::request_body(const GenerationRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", cfg_.model},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"top_p", request.top_p},
               {"max_tokens", request.max_tokens}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (request.seed) {
    if (cfg_.send_seed) {
      body["seed"] = *request.seed;
    } else {
      static std::once_flag warned;
      std::call_once(warned, [] { std::cerr << "warning: sampling seed not sent (send_seed disabled)\n"; });
    }
  }
  return body;
}

GenerationResponse HttpBackend::parse_reply(const std::string& body) {
  GenerationResponse out;
  try {
    json j = json::parse(body);
    const json& choices = j.at("choices");
    if (!choices.is_array() || choices.empty()) throw BackendError(ErrorKind::parse_error, "response has no choices");
    const json& content = choices.at(0).at("message").at("content");
    if (!content.is_string()) throw BackendError(ErrorKind::parse_error, "message content is not a string");
    out.text = content.get<std::string>();
    if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
      out.usage.prompt_tokens = it->value("prompt_tokens", 0);
      out.usage.completion_tokens = it->value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw BackendError(ErrorKind::parse_error, std::string("malformed chat-completions response: ") + e.what());
  }
  return out;
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request) {
  request.validate();
  const SplitUrl url = split_url(cfg_.base_url);
  HttpCall call;
  call.base_url = url.origin;
  call.path = url.prefix + "/chat/completions";
  call.body = request_body(request).dump();
  call.timeout_ms = cfg_.timeout_ms;
  call.headers["Content-Type"] = "application/json";
  if (!api_key_.empty()) call.headers["Authorization"] = "Bearer " + api_key_;

  const auto started = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    try {
      HttpReply reply = transport_(call);
      if (reply.status < 200 || reply.status >= 300) {
        throw BackendError(classify_status(reply.status),
                           "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200), reply.status);
      }
      GenerationResponse out = parse_reply(reply.body);
      out.backend = tag();
      out.retries = attempt;
      out.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      return out;
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= cfg_.max_retries) throw;
      double jitter;
      {
        std::lock_guard lock(rng_mu_);
        jitter_state_ = mix_seed(jitter_state_, static_cast<std::uint64_t>(attempt));
        jitter = 0.5 + 0.5 * static_cast<double>(jitter_state_ >> 11) * 0x1.0p-53;
      }
      sleeper_(backoff_delay(attempt, cfg_.backoff_base_ms, jitter));
    }
  }
}

}  // namespace medalign::backend
