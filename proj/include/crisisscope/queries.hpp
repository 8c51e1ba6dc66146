#pragma once

// Structured information-need queries and the six query-message similarity features.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/corpus.hpp"
#include "crisisscope/encoder.hpp"
#include "crisisscope/error.hpp"
#include "crisisscope/text.hpp"

namespace crisisscope {

/// Placeholder tokens recognised in templates and prototypes.
inline constexpr std::array<std::string_view, 4> kTemplateTokens = {"NUMBER", "NUM", "LOCATION",
                                                                    "LOC"};

struct Query {
  CategoryId category = CategoryId::Casualties;
  std::vector<std::string> keywords;
  std::vector<std::string> templates;
  std::vector<std::string> prototypes;

  bool empty() const { return keywords.empty() && templates.empty() && prototypes.empty(); }

  /// Placeholder tokens used anywhere in templates or prototypes.
  std::vector<std::string> placeholders() const {
    std::vector<std::string> out;
    auto scan = [&](const std::vector<std::string>& items) {
      for (const auto& s : items) {
        for (const auto& w : word_tokens(s)) {
          if (std::find(kTemplateTokens.begin(), kTemplateTokens.end(), w) != kTemplateTokens.end() &&
              std::find(out.begin(), out.end(), w) == out.end()) {
            out.push_back(w);
          }
        }
      }
    };
    scan(templates);
    scan(prototypes);
    return out;
  }

  friend bool operator==(const Query&, const Query&) = default;
};

inline Query query_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("query must be a JSON object");
  Query q;
  auto cat = j.find("category");
  if (cat == j.end() || !cat->is_string()) throw SchemaError("query: missing string field 'category'");
  auto parsed = parse_category(cat->get<std::string>());
  if (!parsed) throw SchemaError("query: unknown category '" + cat->get<std::string>() + "'");
  q.category = *parsed;
  auto list = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array()) {
      throw SchemaError(std::string("query: missing array field '") + key + "'");
    }
    std::vector<std::string> out;
    for (const auto& e : *it) {
      if (!e.is_string()) throw SchemaError(std::string("query: '") + key + "' must hold strings");
      auto s = trim(e.get<std::string>());
      if (!s.empty()) out.push_back(std::move(s));
    }
    return out;
  };
  q.keywords = list("keywords");
  q.templates = list("templates");
  q.prototypes = list("prototypes");
  if (q.empty()) throw ValidationError("query: keywords, templates and prototypes are all empty");
  return q;
}

inline nlohmann::ordered_json query_to_json(const Query& q) {
  nlohmann::ordered_json j;
  j["category"] = std::string(to_string(q.category));
  j["keywords"] = q.keywords;
  j["templates"] = q.templates;
  j["prototypes"] = q.prototypes;
  return j;
}

inline Query parse_query(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("query file '" + path.string() + "': " + e.what());
  }
  return query_from_json(j);
}

struct QueryEmbeddings {
  std::vector<Embedding> keywords;
  std::vector<Embedding> templates;
  std::vector<Embedding> prototypes;
  std::string backend_identity;
};

/// Every keyword, template and prototype is embedded on its own;
/// placeholder tokens go through verbatim.
inline QueryEmbeddings embed_query(const Query& query, const EncoderBackend& backend) {
  QueryEmbeddings qe;
  qe.keywords = backend.encode(query.keywords);
  qe.templates = backend.encode(query.templates);
  qe.prototypes = backend.encode(query.prototypes);
  qe.backend_identity = backend.identity();
  return qe;
}

/// Embeddings memoized per (query content, backend identity).
class QueryEmbeddingCache {
 public:
  std::shared_ptr<const QueryEmbeddings> get(const Query& query, const EncoderBackend& backend) {
    auto key = std::make_pair(query_to_json(query).dump(), backend.identity());
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto qe = std::make_shared<const QueryEmbeddings>(embed_query(query, backend));
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(std::move(key), std::move(qe)).first->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::shared_ptr<const QueryEmbeddings>> cache_;
};

inline constexpr std::size_t kNumSimilarityFeatures = 6;

/// [kw_avg, kw_max, tpl_avg, tpl_max, proto_avg, proto_max]
using SimilarityFeatures = std::array<double, kNumSimilarityFeatures>;

inline SimilarityFeatures similarity_features(const Embedding& message, const QueryEmbeddings& qe) {
  SimilarityFeatures out{};
  auto component = [&](const std::vector<Embedding>& items, std::size_t slot) {
    if (items.empty()) return;
    double sum = 0.0;
    double best = -1.0;
    for (const auto& e : items) {
      const double c = cosine(message, e);
      sum += c;
      best = std::max(best, c);
    }
    // min() guards the 1-ulp case where rounding lifts the mean above the max.
    out[slot] = std::min(sum / static_cast<double>(items.size()), best);
    out[slot + 1] = best;
  };
  component(qe.keywords, 0);
  component(qe.templates, 2);
  component(qe.prototypes, 4);
  return out;
}

}  // namespace crisisscope
