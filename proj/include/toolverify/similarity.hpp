#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "toolverify/error.hpp"
#include "toolverify/text.hpp"

namespace toolverify {

struct Embedding {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }

  bool is_zero() const {
    for (double v : values) {
      if (v != 0.0) return false;
    }
    return true;
  }
};

/// Produces fixed-dimension text embeddings. Implementations are immutable
/// after construction.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Character n-gram term frequencies hashed into `dimension` buckets and
/// L2-normalized. The text is read cyclically (grams wrap from the end back
/// to the start), so a text and its repetition share a direction and texts
/// shorter than n still produce grams.
class NgramEmbedder : public Embedder {
 public:
  explicit NgramEmbedder(std::size_t n = 3, std::size_t dimension = 4096, bool lowercase = true)
      : n_(n), dimension_(dimension), lowercase_(lowercase) {
    if (n_ == 0 || dimension_ == 0) throw PreconditionError("n-gram size and dimension must be positive");
  }

  Embedding embed(std::string_view raw) const override {
    Embedding e{std::vector<double>(dimension_, 0.0)};
    if (raw.empty()) return e;
    const std::string s = lowercase_ ? text::to_lower(raw) : std::string(raw);
    std::string gram(n_, '\0');
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t k = 0; k < n_; ++k) gram[k] = s[(i + k) % s.size()];
      e.values[bucket(gram)] += 1.0;
    }
    double norm = 0.0;
    for (double v : e.values) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : e.values) v /= norm;
    return e;
  }

  std::size_t dimension() const override { return dimension_; }

  std::size_t bucket(std::string_view gram) const { return static_cast<std::size_t>(text::fnv1a64(gram) % dimension_); }

 private:
  std::size_t n_;
  std::size_t dimension_;
  bool lowercase_;
};

/// Cosine similarity; 0 when either vector is zero.
inline double cosine(const Embedding& a, const Embedding& b) {
  if (a.dimension() != b.dimension())
    throw PreconditionError("embedding dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                            std::to_string(b.dimension()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::fmax(-1.0, std::fmin(1.0, c));
}

/// Text used to compare two tools: "name: description", or the bare name.
inline std::string tool_similarity_text(std::string_view name, std::string_view description, bool name_only = false) {
  if (name_only) return std::string(name);
  return std::string(name) + ": " + std::string(description);
}

inline constexpr double kDefaultDedupThreshold = 0.9;

}  // namespace toolverify
