#pragma once

// Sentence-embedding backends and vector utilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "crisisscope/error.hpp"
#include "crisisscope/text.hpp"

namespace crisisscope {

using Embedding = Eigen::VectorXd;

inline constexpr std::size_t kDefaultEmbeddingDim = 1024;

/// Base class for every sentence encoder. `encode` validates inputs and
/// outputs, serializes calls for backends that are not concurrency safe,
/// and L2-normalizes every vector.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Stable string that changes whenever the backend would produce different vectors.
  virtual std::string identity() const = 0;
  /// Empty means every language.
  virtual std::set<std::string> languages() const { return {}; }
  virtual bool concurrent_safe() const { return true; }

  std::vector<Embedding> encode(std::span<const std::string> texts) const {
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (trim(texts[i]).empty()) throw BackendError("encode: empty text", i);
    }
    if (texts.empty()) return {};
    std::vector<Embedding> out;
    if (concurrent_safe()) {
      out = do_encode(texts);
    } else {
      std::lock_guard lock(mutex_);
      out = do_encode(texts);
    }
    if (out.size() != texts.size()) {
      throw BackendError(name() + ": returned " + std::to_string(out.size()) + " vectors for " +
                         std::to_string(texts.size()) + " texts");
    }
    const auto dim = static_cast<Eigen::Index>(dimension());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].size() != dim) throw BackendError(name() + ": wrong embedding dimension", i);
      if (!out[i].allFinite()) throw BackendError(name() + ": non-finite embedding", i);
      const double norm = out[i].norm();
      if (norm > 0) out[i] /= norm;
    }
    return out;
  }

  Embedding encode_one(const std::string& text) const {
    return encode(std::span<const std::string>(&text, 1)).front();
  }

 protected:
  virtual std::vector<Embedding> do_encode(std::span<const std::string> texts) const = 0;

 private:
  mutable std::mutex mutex_;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Word-level alias table: maps a (lower-cased) word in any pseudo-language
/// onto a canonical word, so parallel fixture texts share n-grams.
using AliasTable = std::unordered_map<std::string, std::string>;

inline AliasTable alias_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("alias table must be a JSON object {word: canonical}");
  AliasTable t;
  for (const auto& [k, v] : j.items()) t[ascii_lower(k)] = ascii_lower(v.get<std::string>());
  return t;
}

/// Deterministic desk-scale encoder: the text is lower-cased, split into
/// words, passed through the alias table and re-joined; each character
/// 3-gram of the padded result contributes a seeded pseudo-random D-vector.
/// The sum is L2-normalized by the base class.
class MockEncoder final : public EncoderBackend {
 public:
  explicit MockEncoder(std::size_t dimension = kDefaultEmbeddingDim, std::uint64_t seed = 0,
                       AliasTable aliases = {})
      : dim_(dimension), seed_(seed), aliases_(std::move(aliases)) {
    if (dim_ == 0) throw ValidationError("mock encoder dimension must be positive");
  }

  std::string name() const override { return "mock"; }
  std::size_t dimension() const override { return dim_; }

  std::string identity() const override {
    // Alias table contents participate in the identity, in key order.
    std::map<std::string, std::string> ordered(aliases_.begin(), aliases_.end());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& [k, v] : ordered) h = detail::fnv1a(v, detail::fnv1a(k, h) ^ 0x1F);
    std::ostringstream ss;
    ss << "mock:d=" << dim_ << ":seed=" << seed_ << ":aliases=" << std::hex << h;
    return ss.str();
  }

  /// The alias-resolved text whose 3-grams define the vector.
  std::string canonical_text(std::string_view text) const {
    std::string out = " ";
    for (const auto& w : word_tokens(text)) {
      std::string lw = ascii_lower(w);
      if (auto it = aliases_.find(lw); it != aliases_.end()) lw = it->second;
      out += lw;
      out += ' ';
    }
    return out;
  }

 protected:
  std::vector<Embedding> do_encode(std::span<const std::string> texts) const override {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(canonical_text(t)));
    return out;
  }

 private:
  Embedding embed(const std::string& canon) const {
    Embedding v = Embedding::Zero(static_cast<Eigen::Index>(dim_));
    std::map<std::string_view, int> counts;  // sorted: summation order must not depend on text order
    for (std::size_t i = 0; i + 3 <= canon.size(); ++i) ++counts[std::string_view(canon).substr(i, 3)];
    for (const auto& [gram, count] : counts) {
      std::uint64_t state = detail::fnv1a(gram) ^ (seed_ * 0x9E3779B97F4A7C15ULL);
      for (Eigen::Index d = 0; d < v.size(); ++d) {
        const auto bits = detail::splitmix64(state) >> 11;
        const double u = static_cast<double>(bits) * (1.0 / 9007199254740992.0);
        v[d] += count * (2.0 * u - 1.0);
      }
    }
    return v;
  }

  std::size_t dim_;
  std::uint64_t seed_;
  AliasTable aliases_;
};

/// dot(u, v) / (|u| |v|). A zero vector yields 0.0 and sets *zero_vector.
inline double cosine(const Embedding& u, const Embedding& v, bool* zero_vector = nullptr) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()) + ")");
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (zero_vector) *zero_vector = nu == 0.0 || nv == 0.0;
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

/// One embedding per sentence of an already-normalized text.
inline std::vector<Embedding> sentence_sequence(std::string_view normalized_text,
                                                const EncoderBackend& backend) {
  const auto sentences = split_sentences(normalized_text);
  return backend.encode(sentences);
}

inline nlohmann::json embedding_to_json(const Embedding& e) {
  return std::vector<double>(e.data(), e.data() + e.size());
}

inline Embedding embedding_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Embedding>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace crisisscope
