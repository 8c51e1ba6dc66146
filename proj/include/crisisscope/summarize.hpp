#pragma once

// Regular and diversified summarization over ranked candidates.

#include <algorithm>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/encoder.hpp"
#include "crisisscope/error.hpp"
#include "crisisscope/models.hpp"
#include "crisisscope/text.hpp"

namespace crisisscope {

/// Abstractive generator contract: (source, max output tokens) -> text.
/// `generate` enforces the token budget on whatever the backend returns.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  virtual std::string name() const = 0;
  virtual std::string identity() const { return name(); }
  virtual std::size_t max_input_tokens() const = 0;
  virtual bool concurrent_safe() const { return true; }

  std::string generate(const std::string& source, std::size_t max_tokens) const {
    if (trim(source).empty()) throw BackendError(name() + ": empty source document");
    std::string out;
    if (concurrent_safe()) {
      out = do_generate(source, max_tokens);
    } else {
      std::lock_guard lock(mutex_);
      out = do_generate(source, max_tokens);
    }
    auto tokens = whitespace_tokens(out);
    if (tokens.size() <= max_tokens) return out;
    tokens.resize(max_tokens);
    std::string clipped;
    for (const auto& t : tokens) clipped += (clipped.empty() ? "" : " ") + t;
    return clipped;
  }

 protected:
  virtual std::string do_generate(const std::string& source, std::size_t max_tokens) const = 0;

 private:
  mutable std::mutex mutex_;
};

/// Extractive stand-in: leading sentences (lines count as sentence breaks)
/// while they fit the budget; an oversized first sentence is cut to it.
class LeadGenerator final : public GenerationBackend {
 public:
  explicit LeadGenerator(std::size_t max_input_tokens = 4096) : max_input_(max_input_tokens) {}

  std::string name() const override { return "lead"; }
  std::string identity() const override { return "lead:max_input=" + std::to_string(max_input_); }
  std::size_t max_input_tokens() const override { return max_input_; }

 protected:
  std::string do_generate(const std::string& source, std::size_t max_tokens) const override {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    while (start <= source.size()) {
      const auto nl = source.find('\n', start);
      const auto line = source.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
      for (auto& s : split_sentences(line)) sentences.push_back(std::move(s));
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    std::string out;
    std::size_t used = 0;
    for (const auto& s : sentences) {
      const auto toks = whitespace_tokens(s);
      if (used + toks.size() > max_tokens) {
        if (used == 0) {
          for (std::size_t i = 0; i < max_tokens; ++i) out += (i ? " " : "") + toks[i];
        }
        break;
      }
      for (const auto& t : toks) out += (out.empty() ? "" : " ") + t;
      used += toks.size();
    }
    return out;
  }

 private:
  std::size_t max_input_;
};

enum class SummaryMode { Regular, Diversified };

inline std::string to_string(SummaryMode m) { return m == SummaryMode::Regular ? "regular" : "diversified"; }

inline SummaryMode parse_summary_mode(const std::string& s) {
  if (s == "regular") return SummaryMode::Regular;
  if (s == "diversified") return SummaryMode::Diversified;
  throw ValidationError("unknown summary mode '" + s + "' (expected regular|diversified)");
}

struct SummaryConfig {
  SummaryMode mode = SummaryMode::Regular;
  std::size_t budget = 150;
  std::size_t k_max = 4;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  std::size_t min_candidates = 8;

  void validate() const {
    if (k_max < 1 || k_max > 4) throw ValidationError("summary config: k_max must be in [1, 4]");
    if (budget < 10) throw ValidationError("summary config: budget must be at least 10 tokens");
    if (restarts == 0) throw ValidationError("summary config: restarts must be positive");
  }

  static SummaryConfig from_json(const nlohmann::json& j) {
    SummaryConfig c;
    try {
      if (j.contains("mode")) c.mode = parse_summary_mode(j.at("mode").get<std::string>());
      c.budget = j.value("budget", c.budget);
      c.k_max = j.value("k_max", c.k_max);
      c.seed = j.value("seed", c.seed);
      c.restarts = j.value("restarts", c.restarts);
      c.min_candidates = j.value("min_candidates", c.min_candidates);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("summary config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

struct SummarySegment {
  std::string text;
  std::size_t cluster_size = 0;
  std::vector<std::string> source_ids;  // rank order
  bool truncated = false;               // source cut to the generator's input limit
};

struct Summary {
  SummaryMode mode = SummaryMode::Regular;
  std::vector<SummarySegment> segments;
  std::string full_text;
  std::string generator;
  std::uint64_t seed = 0;

  bool truncated() const {
    return std::any_of(segments.begin(), segments.end(), [](const auto& s) { return s.truncated; });
  }
};

inline nlohmann::ordered_json summary_to_json(const Summary& s) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(s.mode);
  j["full_text"] = s.full_text;
  auto segs = nlohmann::ordered_json::array();
  for (const auto& seg : s.segments) {
    nlohmann::ordered_json o;
    o["text"] = seg.text;
    o["cluster_size"] = seg.cluster_size;
    o["source_ids"] = seg.source_ids;
    segs.push_back(std::move(o));
  }
  j["segments"] = std::move(segs);
  j["metadata"] = {{"generator", s.generator}, {"seed", s.seed}, {"truncated", s.truncated()}};
  return j;
}

inline Summary summary_from_json(const nlohmann::json& j) {
  try {
    Summary s;
    s.mode = parse_summary_mode(j.at("mode").get<std::string>());
    s.full_text = j.at("full_text").get<std::string>();
    for (const auto& o : j.at("segments")) {
      s.segments.push_back({o.at("text").get<std::string>(), o.at("cluster_size").get<std::size_t>(),
                            o.at("source_ids").get<std::vector<std::string>>(), false});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("summary: ") + e.what());
  }
}

/// Joins texts (one per line) in the given order, keeping whole texts until
/// `max_tokens` would be exceeded. The first text is always kept, cut if
/// needed. Sets *truncated when anything was dropped.
inline std::string build_source_document(std::span<const std::string> texts, std::size_t max_tokens,
                                         bool* truncated = nullptr) {
  std::string doc;
  std::size_t used = 0;
  bool cut = false;
  for (const auto& t : texts) {
    const auto toks = whitespace_tokens(t);
    if (used + toks.size() > max_tokens) {
      cut = true;
      if (used == 0) {
        for (std::size_t i = 0; i < max_tokens && i < toks.size(); ++i) doc += (i ? " " : "") + toks[i];
      }
      break;
    }
    if (!doc.empty()) doc += '\n';
    doc += t;
    used += toks.size();
  }
  if (truncated) *truncated = cut;
  return doc;
}

namespace detail {

inline SummarySegment summarize_group(std::span<const RankedCandidate* const> members,
                                      const GenerationBackend& backend, std::size_t budget) {
  std::vector<std::string> texts;
  SummarySegment seg;
  for (const auto* c : members) {
    texts.push_back(c->normalized_text);
    seg.source_ids.push_back(c->message_id);
  }
  seg.cluster_size = members.size();
  const auto doc = build_source_document(texts, backend.max_input_tokens(), &seg.truncated);
  seg.text = backend.generate(doc, budget);
  return seg;
}

}  // namespace detail

/// One generate call over all candidate texts in rank order with the full budget.
inline Summary summarize_regular(std::span<const RankedCandidate> candidates, const GenerationBackend& backend,
                                 const SummaryConfig& config) {
  config.validate();
  if (candidates.empty()) throw ValidationError("summarize: no candidates");
  std::vector<const RankedCandidate*> members;
  for (const auto& c : candidates) members.push_back(&c);
  Summary s;
  s.mode = SummaryMode::Regular;
  s.generator = backend.identity();
  s.seed = config.seed;
  s.segments.push_back(detail::summarize_group(members, backend, config.budget));
  s.full_text = s.segments.front().text;
  return s;
}

// ---------------------------------------------------------------------------
// Clustering

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<Embedding> centroids;
  double inertia = 0.0;
};

namespace detail {

inline double sq_dist(const Embedding& a, const Embedding& b) { return (a - b).squaredNorm(); }

inline std::size_t nearest(const Embedding& p, const std::vector<Embedding>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline KMeansResult lloyd(std::span<const Embedding> points, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = points.size();
  // k-means++ seeding
  std::vector<Embedding> centroids;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(n);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = sq_dist(points[i], centroids[nearest(points[i], centroids)]);
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (chosen = 0; chosen + 1 < n; ++chosen) {
        target -= d2[chosen];
        if (target <= 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centroids.push_back(points[chosen]);
  }

  std::vector<std::size_t> assign(n, k);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = nearest(points[i], centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    // Re-seed empty clusters from the point farthest from its centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (std::find(assign.begin(), assign.end(), c) != assign.end()) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto own = assign[i];
        const bool shared = std::count(assign.begin(), assign.end(), own) > 1;
        const double d = sq_dist(points[i], centroids[own]);
        if (shared && d > far_d) {
          far_d = d;
          far = i;
        }
      }
      assign[far] = c;
      centroids[c] = points[far];
      changed = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
      Embedding sum = Embedding::Zero(points[0].size());
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) {
          sum += points[i];
          ++count;
        }
      }
      if (count > 0) centroids[c] = sum / static_cast<double>(count);
    }
    if (!changed) break;
  }
  KMeansResult r{std::move(assign), std::move(centroids), 0.0};
  for (std::size_t i = 0; i < n; ++i) r.inertia += sq_dist(points[i], r.centroids[r.assignments[i]]);
  return r;
}

}  // namespace detail

/// Seeded k-means++ / Lloyd with `restarts` restarts keeping the lowest inertia.
inline KMeansResult kmeans(std::span<const Embedding> points, std::size_t k, std::uint64_t seed,
                           std::size_t restarts) {
  if (k == 0) throw ValidationError("cluster: k must be at least 1");
  if (k > points.size()) {
    throw ValidationError("cluster: k = " + std::to_string(k) + " exceeds point count " +
                          std::to_string(points.size()));
  }
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    auto res = detail::lloyd(points, k, rng);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

inline std::vector<std::size_t> cluster(std::span<const Embedding> embeddings, std::size_t k,
                                        const SummaryConfig& config) {
  return kmeans(embeddings, k, config.seed, config.restarts).assignments;
}

/// Mean silhouette coefficient with Euclidean distance. Points in singleton
/// clusters score 0. Requires 2 <= #clusters <= n - 1.
inline double silhouette_score(std::span<const Embedding> points, std::span<const std::size_t> labels) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw ValidationError("silhouette: label count mismatch");
  const std::size_t k = n == 0 ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : labels) ++sizes[l];
  const auto used = static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; }));
  if (used < 2 || used > n - 1) throw ValidationError("silhouette: need 2 <= clusters <= n - 1");

  nn::Matrix dist(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (points[i] - points[j]).norm();
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
      dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
  }
  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) sums[labels[j]] += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const std::size_t own = labels[i];
    if (sizes[own] <= 1) continue;
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

struct ClusterSelection {
  std::size_t k = 1;
  std::map<std::size_t, double> silhouettes;  // candidate k -> mean silhouette
};

/// Fewer than `min_candidates` points -> 1; otherwise the k in [2, k_max]
/// whose k-means solution has the highest mean silhouette (ties: smaller k).
inline ClusterSelection select_num_clusters(std::span<const Embedding> embeddings, const SummaryConfig& config) {
  ClusterSelection sel;
  const std::size_t n = embeddings.size();
  if (n < config.min_candidates || n < 3) return sel;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= std::min<std::size_t>(config.k_max, n - 1); ++k) {
    const auto labels = cluster(embeddings, k, config);
    const double s = silhouette_score(embeddings, labels);
    sel.silhouettes[k] = s;
    if (s > best) {
      best = s;
      sel.k = k;
    }
  }
  return sel;
}

inline std::size_t choose_num_clusters(std::span<const Embedding> embeddings, const SummaryConfig& config) {
  return select_num_clusters(embeddings, config).k;
}

/// Clusters the candidates, orders clusters by size (ties: the cluster with
/// the best-ranked member first) and generates one segment per cluster with
/// budget / k tokens (remainder to the first cluster).
inline Summary summarize_diversified(std::span<const RankedCandidate> candidates, const GenerationBackend& backend,
                                     const SummaryConfig& config) {
  config.validate();
  if (candidates.empty()) throw ValidationError("summarize: no candidates");
  // Rank order is the order given; callers pass rank() output.
  std::vector<Embedding> points;
  for (const auto& c : candidates) points.push_back(c.embedding);
  const std::size_t k = choose_num_clusters(points, config);
  const auto labels = k == 1 ? std::vector<std::size_t>(candidates.size(), 0) : cluster(points, k, config);

  std::vector<std::vector<const RankedCandidate*>> groups(k);
  std::vector<std::size_t> first_pos(k, candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    groups[labels[i]].push_back(&candidates[i]);
    first_pos[labels[i]] = std::min(first_pos[labels[i]], i);
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (groups[a].size() != groups[b].size()) return groups[a].size() > groups[b].size();
    return first_pos[a] < first_pos[b];
  });

  std::vector<std::size_t> budgets(k, config.budget / k);
  budgets[0] += config.budget % k;

  Summary s;
  s.mode = SummaryMode::Diversified;
  s.generator = backend.identity();
  s.seed = config.seed;
  s.segments.resize(k);
  if (backend.concurrent_safe() && k > 1) {
    std::vector<std::future<SummarySegment>> jobs;
    for (std::size_t slot = 0; slot < k; ++slot) {
      jobs.push_back(std::async(std::launch::async, [&, slot] {
        return detail::summarize_group(groups[order[slot]], backend, budgets[slot]);
      }));
    }
    for (std::size_t slot = 0; slot < k; ++slot) s.segments[slot] = jobs[slot].get();
  } else {
    for (std::size_t slot = 0; slot < k; ++slot) {
      s.segments[slot] = detail::summarize_group(groups[order[slot]], backend, budgets[slot]);
    }
  }
  for (const auto& seg : s.segments) {
    if (seg.text.empty()) continue;
    if (!s.full_text.empty()) s.full_text += '\n';
    s.full_text += seg.text;
  }
  return s;
}

inline Summary summarize(std::span<const RankedCandidate> candidates, const GenerationBackend& backend,
                         const SummaryConfig& config) {
  return config.mode == SummaryMode::Regular ? summarize_regular(candidates, backend, config)
                                             : summarize_diversified(candidates, backend, config);
}

}  // namespace crisisscope
