#pragma once

#include <chrono>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <httplib.h>

#include "toolverify/call.hpp"
#include "toolverify/error.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

/// Network or authentication failure during live execution; the sample is
/// left unscored rather than failed.
class LiveError : public Error {
 public:
  using Error::Error;
};

struct LiveOptions {
  std::set<std::string> allowed_hosts;
  std::string api_key;  // substituted for {API_KEY}-style placeholders
  std::chrono::milliseconds timeout{15000};
  std::chrono::milliseconds min_interval{1000};  // per-host rate limit

  static LiveOptions from_env(LiveOptions base) {
    if (const char* key = std::getenv("TOOLVERIFY_API_KEY"); key && *key) base.api_key = key;
    return base;
  }
};

inline LiveOptions live_options_from_env() { return LiveOptions::from_env(LiveOptions{}); }

namespace detail {

class HostThrottle {
 public:
  void wait(const std::string& host, std::chrono::milliseconds interval) {
    std::unique_lock lock(mutex_);
    auto now = std::chrono::steady_clock::now();
    auto& next = next_[host];
    auto start = std::max(now, next);
    next = start + interval;
    lock.unlock();
    std::this_thread::sleep_until(start);
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::chrono::steady_clock::time_point> next_;
};

inline HostThrottle& throttle() {
  static HostThrottle t;
  return t;
}

/// Replaces every {UPPER_SNAKE} placeholder (raw or percent-encoded) with the key.
inline std::string fill_credentials(std::string url, const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < url.size();) {
    std::size_t open_len = url.compare(i, 3, "%7B") == 0 || url.compare(i, 3, "%7b") == 0 ? 3 : (url[i] == '{' ? 1 : 0);
    if (open_len) {
      std::size_t j = i + open_len;
      while (j < url.size() && (std::isupper(static_cast<unsigned char>(url[j])) || url[j] == '_' || std::isdigit(static_cast<unsigned char>(url[j])))) ++j;
      std::size_t close_len = url.compare(j, 3, "%7D") == 0 || url.compare(j, 3, "%7d") == 0 ? 3 : (j < url.size() && url[j] == '}' ? 1 : 0);
      if (close_len && j > i + open_len) {
        out += text::percent_encode(key);
        i = j + close_len;
        continue;
      }
    }
    out += url[i++];
  }
  return out;
}

}  // namespace detail

/// Performs a call against its real endpoint and returns the response body.
/// Only hosts in the allowlist are contacted.
inline std::string execute_live(std::string_view call, const LiveOptions& options) {
  auto tokens = detail::shell_tokens(call);
  std::string url;
  for (const auto& t : tokens) {
    if (t.value.find("://") != std::string::npos) {
      url = t.value;
      break;
    }
  }
  const auto canonical = parse_call(call);
  if (canonical.method != "GET") throw PreconditionError("live execution supports GET calls only");
  if (url.empty()) throw PreconditionError("call has no URL");

  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end + 3);
  std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string target = path_start == std::string::npos ? "/" : url.substr(path_start);
  std::string host = text::to_lower(origin.substr(scheme_end + 3));
  if (auto colon = host.find(':'); colon != std::string::npos) host = host.substr(0, colon);
  if (!options.allowed_hosts.count(host)) throw PreconditionError("host '" + host + "' is not in the live-execution allowlist");
  if (target.find('{') != std::string::npos || target.find("%7B") != std::string::npos) {
    if (options.api_key.empty()) throw LiveError("call needs an API key but none was provided");
    target = detail::fill_credentials(target, options.api_key);
  }

  detail::throttle().wait(host, options.min_interval);
  httplib::Client client(origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  client.set_connection_timeout(secs.count(), 0);
  client.set_read_timeout(secs.count(), 0);
  auto result = client.Get(target);
  if (!result) throw LiveError("live request to " + host + " failed: " + httplib::to_string(result.error()));
  if (result->status == 401 || result->status == 403) throw LiveError("live request to " + host + " was not authorized");
  return result->body;
}

}  // namespace toolverify
