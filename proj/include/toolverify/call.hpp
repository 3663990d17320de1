#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "toolverify/error.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

/// Normalized REST call: verb, scheme://host/path, decoded query parameters.
/// Credential placeholders such as appid={API_KEY} are dropped at parse time.
struct CanonicalCall {
  std::string method;
  std::string base_url;
  std::map<std::string, std::string> params;
  bool auth_placeholder_stripped = false;

  /// Stable text form with parameters sorted by name.
  std::string to_string() const {
    std::string out = method + " " + base_url;
    char sep = '?';
    for (const auto& [k, v] : params) {
      out += sep;
      out += text::percent_encode(k) + "=" + text::percent_encode(v);
      sep = '&';
    }
    return out;
  }

  bool operator==(const CanonicalCall&) const = default;
};

struct CallParseOptions {
  /// Query keys treated as credentials and always dropped.
  std::set<std::string> auth_params = {"appid", "api_key", "apikey"};
};

namespace detail {

inline bool is_http_verb(std::string_view s) {
  static const std::set<std::string, std::less<>> kVerbs = {"GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS"};
  return kVerbs.count(text::to_upper(s)) > 0;
}

struct Token {
  std::string value;
  std::size_t offset;
};

/// Whitespace tokenizer honoring single and double quotes.
inline std::vector<Token> shell_tokens(std::string_view s) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && text::is_space(s[i])) ++i;
    if (i >= s.size()) break;
    Token tok{{}, i};
    while (i < s.size() && !text::is_space(s[i])) {
      char c = s[i];
      if (c == '\'' || c == '"') {
        auto close = s.find(c, i + 1);
        if (close == std::string_view::npos) throw ParseError("unterminated quote", i);
        tok.value.append(s.substr(i + 1, close - i - 1));
        i = close + 1;
      } else {
        tok.value += c;
        ++i;
      }
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

inline bool is_auth_placeholder(std::string_view v) {
  if (v.size() < 3 || v.front() != '{' || v.back() != '}') return false;
  for (char c : v.substr(1, v.size() - 2)) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

}  // namespace detail

/// Parses `curl [-X VERB] 'URL'`, `VERB URL` or a bare URL.
inline CanonicalCall parse_call(std::string_view call, const CallParseOptions& options = {}) {
  const auto tokens = detail::shell_tokens(call);
  if (tokens.empty()) throw ParseError("empty call", 0);

  CanonicalCall out;
  out.method = "GET";
  const detail::Token* url = nullptr;
  std::size_t i = 0;
  if (tokens[0].value == "curl") {
    for (i = 1; i < tokens.size(); ++i) {
      const auto& t = tokens[i].value;
      if (t == "-X" || t == "--request") {
        if (i + 1 >= tokens.size()) throw ParseError("-X without a verb", tokens[i].offset);
        if (!detail::is_http_verb(tokens[i + 1].value)) throw ParseError("unknown HTTP verb '" + tokens[i + 1].value + "'", tokens[i + 1].offset);
        out.method = text::to_upper(tokens[++i].value);
      } else if (t == "-H" || t == "--header") {
        ++i;
      } else if (t.find("://") != std::string::npos && !url) {
        url = &tokens[i];
      }
    }
  } else if (detail::is_http_verb(tokens[0].value) && tokens.size() >= 2) {
    out.method = text::to_upper(tokens[0].value);
    url = &tokens[1];
    if (tokens.size() > 2) throw ParseError("trailing text after URL", tokens[2].offset);
  } else if (tokens.size() == 1 && tokens[0].value.find("://") != std::string::npos) {
    url = &tokens[0];
  } else {
    throw ParseError("not a recognizable call", tokens[0].offset);
  }
  if (!url) throw ParseError("call has no URL", call.size());

  std::string_view u = url->value;
  if (auto hash = u.find('#'); hash != std::string_view::npos) u = u.substr(0, hash);
  const auto scheme_end = u.find("://");
  if (scheme_end == 0) throw ParseError("URL lacks a scheme", url->offset);
  for (std::size_t k = 0; k < scheme_end; ++k) {
    if (!std::isalpha(static_cast<unsigned char>(u[k]))) throw ParseError("malformed URL scheme", url->offset + k);
  }
  const auto query_start = u.find('?');
  const auto before_query = u.substr(0, query_start);
  const auto path_start = before_query.find('/', scheme_end + 3);
  const auto authority = before_query.substr(scheme_end + 3, path_start == std::string_view::npos ? std::string_view::npos : path_start - scheme_end - 3);
  if (authority.empty()) throw ParseError("URL has no host", url->offset + scheme_end + 3);
  std::string path = path_start == std::string_view::npos ? std::string("/") : text::percent_decode(before_query.substr(path_start));
  out.base_url = text::to_lower(u.substr(0, scheme_end)) + "://" + text::to_lower(authority) + path;

  if (query_start != std::string_view::npos) {
    std::string_view query = u.substr(query_start + 1);
    std::size_t pos = 0;
    while (pos <= query.size()) {
      auto amp = query.find('&', pos);
      if (amp == std::string_view::npos) amp = query.size();
      auto part = query.substr(pos, amp - pos);
      if (!part.empty()) {
        auto eq = part.find('=');
        std::string key = text::percent_decode(part.substr(0, eq));
        std::string value = eq == std::string_view::npos ? std::string() : text::percent_decode(part.substr(eq + 1));
        if (key.empty()) throw ParseError("query parameter with empty name", url->offset + query_start + 1 + pos);
        if (detail::is_auth_placeholder(value) || options.auth_params.count(key)) {
          out.auth_placeholder_stripped = true;
        } else if (!out.params.emplace(std::move(key), std::move(value)).second) {
          throw ParseError("duplicate query parameter", url->offset + query_start + 1 + pos);
        }
      }
      pos = amp + 1;
    }
  }
  return out;
}

struct EquivalencePolicy {
  /// Lenient: a parameter absent on one side equals none_token on the other.
  bool lenient_none = false;
  std::string none_token = "none";
};

/// Comparison key for a parameter value: canonical decimal when numeric,
/// otherwise the exact text.
inline std::string value_key(std::string_view v) {
  if (auto d = text::canonical_decimal(v)) return "#" + *d;
  return "$" + std::string(v);
}

inline bool values_equal(std::string_view a, std::string_view b) { return value_key(a) == value_key(b); }

inline bool calls_equivalent(const CanonicalCall& a, const CanonicalCall& b, const EquivalencePolicy& policy = {}) {
  if (a.method != b.method || a.base_url != b.base_url) return false;
  auto keyed = [&](const CanonicalCall& c, const CanonicalCall& other) {
    std::map<std::string, std::string> m;
    for (const auto& [k, v] : c.params) m[k] = value_key(v);
    if (policy.lenient_none) {
      for (const auto& [k, v] : other.params) m.try_emplace(k, value_key(policy.none_token));
    }
    return m;
  };
  return keyed(a, b) == keyed(b, a);
}

inline bool calls_equivalent(std::string_view a, std::string_view b, const EquivalencePolicy& policy = {}) {
  return calls_equivalent(parse_call(a), parse_call(b), policy);
}

}  // namespace toolverify
