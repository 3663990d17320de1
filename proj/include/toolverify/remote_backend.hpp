#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "toolverify/backend.hpp"

namespace toolverify {

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

/// Client for a generation endpoint speaking the single-POST protocol:
/// request {prompt, temperature, top_p, max_tokens, seed}, response {text}.
/// An optional boolean "truncated" in the response permits empty text.
class RemoteBackend : public Backend {
 public:
  struct Options {
    std::string url;  // e.g. http://127.0.0.1:8080/generate
    std::string token;
    std::chrono::milliseconds timeout{60000};
    RetryPolicy retry;
  };

  explicit RemoteBackend(Options options) : options_(std::move(options)) {
    auto scheme_end = options_.url.find("://");
    if (scheme_end == std::string::npos) throw PreconditionError("endpoint URL lacks a scheme: " + options_.url);
    auto path_start = options_.url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = options_.url;
      path_ = "/";
    } else {
      origin_ = options_.url.substr(0, path_start);
      path_ = options_.url.substr(path_start);
    }
  }

  /// Builds options from TOOLVERIFY_ENDPOINT / TOOLVERIFY_TOKEN when set.
  static Options options_from_env() { return options_from_env(Options{}); }

  static Options options_from_env(Options base) {
    if (const char* url = std::getenv("TOOLVERIFY_ENDPOINT"); url && *url) base.url = url;
    if (const char* token = std::getenv("TOOLVERIFY_TOKEN"); token && *token) base.token = token;
    return base;
  }

  static nlohmann::json encode_request(const GenerationRequest& request) {
    nlohmann::json body = {
        {"prompt", request.prompt},
        {"temperature", request.sampling.temperature},
        {"top_p", request.sampling.top_p},
        {"max_tokens", request.sampling.max_tokens},
    };
    body["seed"] = request.sampling.seed ? nlohmann::json(*request.sampling.seed) : nlohmann::json(nullptr);
    return body;
  }

  GenerationResponse decode_response(const std::string& body) const {
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("endpoint returned invalid JSON: ") + e.what());
    }
    if (!parsed.is_object() || !parsed.contains("text") || !parsed["text"].is_string())
      throw ProtocolError("endpoint response lacks a string \"text\" field");
    GenerationResponse response{parsed["text"].get<std::string>(), id(), false};
    if (parsed.contains("truncated") && parsed["truncated"].is_boolean()) response.truncated = parsed["truncated"].get<bool>();
    if (response.text.empty() && !response.truncated)
      throw ProtocolError("endpoint returned empty text without a truncation flag");
    return response;
  }

  GenerationResponse generate(const GenerationRequest& request) override {
    request.validate();
    const auto payload = encode_request(request).dump();
    auto backoff = options_.retry.initial_backoff;
    for (int attempt = 0;; ++attempt) {
      httplib::Client client(origin_);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      if (!options_.token.empty()) client.set_bearer_token_auth(options_.token);

      auto result = client.Post(path_, payload, "application/json");
      if (result) {
        if (result->status != 200)
          throw ProtocolError("endpoint answered HTTP " + std::to_string(result->status));
        return decode_response(result->body);
      }
      if (attempt >= options_.retry.max_retries)
        throw TransportError("endpoint " + options_.url + " unreachable: " + httplib::to_string(result.error()));
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * options_.retry.multiplier));
    }
  }

  std::string id() const override { return "remote:" + options_.url; }

 private:
  Options options_;
  std::string origin_;
  std::string path_;
};

}  // namespace toolverify
