#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "toolverify/toolverify.hpp"

namespace tvtest {

inline std::string source_path(const std::string& rel) { return std::string(TOOLVERIFY_SOURCE_DIR) + "/" + rel; }

inline std::string fixture(const std::string& rel) { return source_path("tests/fixtures/" + rel); }

inline const toolverify::Registry& toolbench() {
  static const auto reg = toolverify::load_registry(source_path("assets/registry/toolbench17.json"));
  return reg;
}

inline const toolverify::Registry& figure2() {
  static const auto reg = toolverify::load_registry(fixture("figure2_registry.json"));
  return reg;
}

/// Backend answering through a callback; counts requests per stage.
class FunctionBackend : public toolverify::Backend {
 public:
  using Fn = std::function<std::string(const toolverify::GenerationRequest&)>;

  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}

  toolverify::GenerationResponse generate(const toolverify::GenerationRequest& request) override {
    request.validate();
    {
      std::lock_guard lock(mutex_);
      tags_.push_back(request.tag);
      prompts_.push_back(request.prompt);
    }
    return {fn_(request), "fn", false};
  }

  std::string id() const override { return "fn"; }

  std::size_t count(toolverify::StageTag tag) const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (auto t : tags_) n += t == tag;
    return n;
  }

  std::size_t total() const {
    std::lock_guard lock(mutex_);
    return tags_.size();
  }

  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  Fn fn_;
  mutable std::mutex mutex_;
  std::vector<toolverify::StageTag> tags_;
  std::vector<std::string> prompts_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tv") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Text after the last occurrence of `marker` up to the next '\n' or '"'.
inline std::string after_last(const std::string& s, const std::string& marker) {
  auto at = s.rfind(marker);
  if (at == std::string::npos) return {};
  auto start = at + marker.size();
  auto end = s.find_first_of("\n\"", start);
  return s.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

}  // namespace tvtest
