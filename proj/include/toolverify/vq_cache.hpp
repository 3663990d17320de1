#pragma once

#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "toolverify/error.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

/// Digest of a tool's (name, description).
inline std::string tool_digest(std::string_view name, std::string_view description) {
  std::string buf(name);
  buf += '\x1f';
  buf += description;
  return text::hex64(text::fnv1a64(buf));
}

inline std::string tool_digest(const ToolSpec& tool) { return tool_digest(tool.name, tool.description); }

/// Unordered pair of tool digests; key(a, b) == key(b, a).
struct VQCacheKey {
  std::string low;
  std::string high;

  static VQCacheKey of(const std::string& a, const std::string& b) {
    return a <= b ? VQCacheKey{a, b} : VQCacheKey{b, a};
  }

  static VQCacheKey of(const ToolSpec& a, const ToolSpec& b) { return of(tool_digest(a), tool_digest(b)); }

  auto operator<=>(const VQCacheKey&) const = default;
};

/// Contrastive verification questions keyed by unordered tool pair.
/// Concurrent reads, serialized writes. Optionally backed by an
/// append-only JSONL file.
class VQCache {
 public:
  struct Entry {
    std::string digest_a, digest_b, name_a, name_b, question;
  };

  VQCache() = default;

  /// Loads every record of `path` (if it exists) and appends new entries to it.
  explicit VQCache(std::string path) : path_(std::move(path)) {
    std::ifstream probe(path_);
    if (probe) load(path_);
  }

  std::optional<std::string> find(const VQCacheKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.question;
  }

  /// Stores the question unless the pair is already present. Returns true when inserted.
  bool insert(const ToolSpec& a, const ToolSpec& b, const std::string& question) {
    Entry e{tool_digest(a), tool_digest(b), a.name, b.name, question};
    auto key = VQCacheKey::of(e.digest_a, e.digest_b);
    std::unique_lock lock(mutex_);
    if (!entries_.emplace(key, e).second) return false;
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app | std::ios::binary);
      if (!out) throw IoError("cannot append to cache " + path_);
      out << to_json(e).dump() << "\n";
    }
    return true;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  std::vector<Entry> entries() const {
    std::shared_lock lock(mutex_);
    std::vector<Entry> out;
    for (const auto& [k, e] : entries_) out.push_back(e);
    return out;
  }

  static nlohmann::json to_json(const Entry& e) {
    return {{"digest_a", e.digest_a}, {"digest_b", e.digest_b}, {"name_a", e.name_a}, {"name_b", e.name_b}, {"question", e.question}};
  }

 private:
  void load(const std::string& path) {
    auto lines = text::split_lines(text::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (text::trim_view(lines[i]).empty()) continue;
      try {
        auto j = nlohmann::json::parse(lines[i]);
        Entry e{j.at("digest_a").get<std::string>(), j.at("digest_b").get<std::string>(), j.at("name_a").get<std::string>(),
                j.at("name_b").get<std::string>(), j.at("question").get<std::string>()};
        entries_.emplace(VQCacheKey::of(e.digest_a, e.digest_b), std::move(e));
      } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path + ":" + std::to_string(i + 1) + ": corrupt cache record: " + ex.what(), i + 1);
      }
    }
  }

  std::string path_;
  mutable std::shared_mutex mutex_;
  std::map<VQCacheKey, Entry> entries_;
};

}  // namespace toolverify
