// Acceptance runner: one PASS/FAIL line per criterion, each under its own
// wall-clock limit. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "crisisscope.hpp"
#include "fixtures.hpp"

namespace cs = crisisscope;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

cs::Embedding random_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  cs::Embedding v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = n(rng);
  return v;
}

double naive_cosine(const cs::Embedding& a, const cs::Embedding& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome similarity_oracle() {
  Outcome out;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(1, 6);
  double worst = 0;
  for (int pair = 0; pair < 100; ++pair) {
    cs::QueryEmbeddings qe;
    for (auto* group : {&qe.keywords, &qe.templates, &qe.prototypes}) {
      const int n = count(rng);
      for (int i = 0; i < n; ++i) group->push_back(random_vector(16, rng));
    }
    const auto msg = random_vector(16, rng);
    const auto got = cs::similarity_features(msg, qe);
    std::size_t slot = 0;
    for (const auto* group : {&qe.keywords, &qe.templates, &qe.prototypes}) {
      double sum = 0, best = -2;
      for (const auto& e : *group) {
        const double c = naive_cosine(msg, e);
        sum += c;
        best = std::max(best, c);
      }
      const double avg = sum / static_cast<double>(group->size());
      worst = std::max({worst, std::abs(got[slot] - avg), std::abs(got[slot + 1] - best)});
      out.require(got[slot + 1] >= got[slot], "max < avg at pair " + std::to_string(pair));
      slot += 2;
    }
  }
  out.require(worst <= 1e-9, "max deviation " + std::to_string(worst));
  if (out.ok) out.detail = "100 pairs, max |diff| " + sci(worst);
  return out;
}

Outcome scaling_invariants() {
  Outcome out;
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> size(1, 40);
  std::uniform_int_distribution<int> small(0, 6);
  std::bernoulli_distribution coin(0.5);
  std::size_t checked = 0;
  for (int corpus = 0; corpus < 200 && out.ok; ++corpus) {
    std::vector<cs::RawFeatures> train(static_cast<std::size_t>(size(rng)));
    for (auto& v : train) {
      for (std::size_t i = 0; i < cs::kNumTextFeatures; ++i) {
        v[i] = cs::is_binary_feature(i) ? (coin(rng) ? 1.0 : 0.0) : static_cast<double>(small(rng));
      }
    }
    const auto scaler = cs::fit_scaler(train);
    std::vector<cs::RawFeatures> probe = train;
    for (int extra = 0; extra < 5; ++extra) {
      cs::RawFeatures v{};
      for (std::size_t i = 0; i < cs::kNumTextFeatures; ++i) {
        v[i] = cs::is_binary_feature(i) ? (coin(rng) ? 1.0 : 0.0) : static_cast<double>(small(rng) * 3 - 4);
      }
      probe.push_back(v);
    }
    for (const auto& v : probe) {
      const auto s = scaler.apply(v);
      for (std::size_t i = 0; i < cs::kNumTextFeatures; ++i) {
        out.require(s[i] >= 0.0 && s[i] <= 1.0, "value outside [0,1] at index " + std::to_string(i));
        if (cs::is_binary_feature(i)) out.require(s[i] == v[i], "binary index changed: " + std::to_string(i));
      }
    }
    for (std::size_t i = 0; i < cs::kNumTextFeatures; ++i) {
      if (cs::is_binary_feature(i)) continue;
      double lo = train[0][i], hi = train[0][i];
      for (const auto& v : train) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
      }
      if (lo == hi) continue;
      for (const auto& v : train) {
        const double s = scaler.apply(v)[i];
        if (v[i] == lo) out.require(s == 0.0, "training min not mapped to 0");
        if (v[i] == hi) out.require(s == 1.0, "training max not mapped to 1");
      }
      ++checked;
    }
  }
  if (out.ok) out.detail = "200 corpora, " + std::to_string(checked) + " non-degenerate columns";
  return out;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

double f1_oracle(const std::vector<int>& pred, const std::vector<int>& y) {
  double total = 0;
  for (int cls : {0, 1}) {
    int tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      support += y[i] == cls;
      tp += pred[i] == cls && y[i] == cls;
      fp += pred[i] == cls && y[i] != cls;
      fn += pred[i] != cls && y[i] == cls;
    }
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    total += f1 * support;
  }
  return total / static_cast<double>(y.size());
}

Outcome auc_f1_oracle() {
  Outcome out;
  {
    std::vector<double> s = {0.9, 0.4, 0.6, 0.1};
    std::vector<int> y = {1, 1, 0, 0};
    const auto auc = cs::auc_rank(s, y);
    out.require(auc && *auc == 0.75, "hand fixture AUC != 0.75");
  }
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> size(2, 12);
  std::uniform_int_distribution<int> level(0, 5);  // coarse scores force ties
  std::bernoulli_distribution coin(0.5);
  int sets = 0;
  while (sets < 500 && out.ok) {
    const int n = size(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = level(rng) / 5.0;
      y[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
    }
    if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) continue;
    ++sets;
    const auto auc = cs::auc_rank(s, y);
    out.require(auc && std::abs(*auc - pairwise_auc(s, y)) < 1e-12, "AUC mismatch on set " + std::to_string(sets));
    std::vector<int> pred;
    for (double v : s) pred.push_back(cs::decide(v));
    out.require(std::abs(cs::weighted_f1(pred, y) - f1_oracle(pred, y)) < 1e-12,
                "F1 mismatch on set " + std::to_string(sets));
  }
  if (out.ok) out.detail = "hand fixture 0.75, 500 random sets agree";
  return out;
}

double naive_silhouette(const std::vector<cs::Embedding>& pts, const std::vector<std::size_t>& labels) {
  const std::size_t n = pts.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::size_t, std::pair<double, int>> acc;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0;
      for (Eigen::Index t = 0; t < pts[i].size(); ++t) d2 += (pts[i][t] - pts[j][t]) * (pts[i][t] - pts[j][t]);
      auto& a = acc[labels[j]];
      a.first += std::sqrt(d2);
      a.second += 1;
    }
    if (acc.count(labels[i]) == 0) continue;  // singleton cluster
    const double a = acc[labels[i]].first / acc[labels[i]].second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [c, v] : acc) {
      if (c != labels[i]) b = std::min(b, v.first / v.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

Outcome cluster_count() {
  Outcome out;
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> size(1, 30);
  std::uniform_int_distribution<int> blobs(1, 5);
  cs::SummaryConfig cfg;
  cfg.seed = 5;
  int below = 0;
  for (int set = 0; set < 50 && out.ok; ++set) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<cs::Embedding> centers;
    const int nb = blobs(rng);
    for (int b = 0; b < nb; ++b) centers.push_back(random_vector(8, rng) * 3.0);
    std::vector<cs::Embedding> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(centers[i % centers.size()] + random_vector(8, rng) * 0.5);
    const auto sel = cs::select_num_clusters(pts, cfg);
    out.require(sel.k >= 1 && sel.k <= 4, "k outside [1,4]");
    if (n < cfg.min_candidates) {
      ++below;
      out.require(sel.k == 1, "below the minimum but k=" + std::to_string(sel.k));
      continue;
    }
    double best = -2;
    std::size_t best_k = 0;
    std::map<std::size_t, double> oracle;
    for (std::size_t k = 2; k <= 4; ++k) {
      const double s = naive_silhouette(pts, cs::cluster(pts, k, cfg));
      oracle[k] = s;
      out.require(sel.silhouettes.count(k) && std::abs(sel.silhouettes.at(k) - s) <= 1e-9,
                  "silhouette mismatch at k=" + std::to_string(k));
      if (s > best + 1e-9) {
        best = s;
        best_k = k;
      }
    }
    // Within-tolerance ties may go to either k.
    out.require(sel.k == best_k || std::abs(oracle[sel.k] - best) <= 1e-9,
                "chose k=" + std::to_string(sel.k) + ", oracle k=" + std::to_string(best_k));
  }
  if (out.ok) out.detail = "50 sets (" + std::to_string(below) + " below minimum)";
  return out;
}

std::vector<cs::RankedCandidate> clustered_candidates(std::size_t n, std::size_t groups, std::mt19937_64& rng) {
  static const std::vector<std::string> words = {"river", "bridge", "storm", "power", "road", "rain", "fire",
                                                 "school", "water", "wind", "town", "help"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_int_distribution<int> len(3, 14);
  std::vector<cs::Embedding> centers;
  for (std::size_t g = 0; g < groups; ++g) centers.push_back(random_vector(8, rng) * 4.0);
  std::vector<cs::RankedCandidate> out;
  for (std::size_t i = 0; i < n; ++i) {
    cs::RankedCandidate c;
    c.message_id = "m" + std::to_string(i);
    const int l = len(rng);
    for (int w = 0; w < l; ++w) c.normalized_text += (w ? " " : "") + words[pick(rng)];
    c.normalized_text += ".";
    c.text = c.normalized_text;
    c.embedding = centers[i % groups] + random_vector(8, rng) * 0.3;
    c.score = 1.0 - static_cast<double>(i) / static_cast<double>(n + 1);
    c.rank = i + 1;
    out.push_back(std::move(c));
  }
  return out;
}

Outcome diversified_structure() {
  Outcome out;
  std::mt19937_64 rng(15);
  cs::LeadGenerator gen;
  int fixtures_run = 0;
  for (std::size_t groups : {2, 3, 4}) {
    for (std::size_t budget : {20, 50, 150}) {
      const auto cands = clustered_candidates(24, groups, rng);
      cs::SummaryConfig cfg;
      cfg.mode = cs::SummaryMode::Diversified;
      cfg.budget = budget;
      cfg.seed = 3;
      const auto s = cs::summarize(cands, gen, cfg);
      ++fixtures_run;
      std::multiset<std::string> ids;
      std::size_t tokens = 0;
      for (std::size_t i = 0; i < s.segments.size(); ++i) {
        const auto& seg = s.segments[i];
        if (i > 0) out.require(s.segments[i - 1].cluster_size >= seg.cluster_size, "segments not by size");
        out.require(seg.cluster_size == seg.source_ids.size(), "cluster size != source ids");
        ids.insert(seg.source_ids.begin(), seg.source_ids.end());
        tokens += cs::whitespace_tokens(seg.text).size();
      }
      std::multiset<std::string> expected;
      for (const auto& c : cands) expected.insert(c.message_id);
      out.require(ids == expected, "source ids do not partition the candidates");
      out.require(tokens <= budget, "token budget exceeded");
      out.require(cs::whitespace_tokens(s.full_text).size() <= budget, "full text over budget");
    }
  }
  // Below the clustering minimum diversified collapses to one cluster.
  const auto few = clustered_candidates(5, 2, rng);
  cs::SummaryConfig cfg;
  cfg.budget = 30;
  cfg.mode = cs::SummaryMode::Regular;
  const auto regular = cs::summarize(few, gen, cfg);
  cfg.mode = cs::SummaryMode::Diversified;
  const auto diversified = cs::summarize(few, gen, cfg);
  out.require(diversified.segments.size() == 1, "k=1 fixture produced several segments");
  out.require(diversified.full_text == regular.full_text, "k=1 full_text differs from regular");
  if (out.ok) out.detail = std::to_string(fixtures_run) + " fixtures plus k=1 identity";
  return out;
}

Outcome end_to_end_retrieval() {
  Outcome out;
  const auto corpus = fixtures::cross_lingual_corpus();
  cs::MockEncoder enc(fixtures::kRetrievalDim, 0, fixtures::alias_table());
  const auto reg = fixtures::annotators();
  cs::FeatureContext ctx{enc, reg};
  const auto candidates = fixtures::informative_candidates(corpus, ctx, 1);

  // A planted message counts as retrieved when it or one of its planted
  // duplicates is in the top 10: duplicates carry the same content and
  // dedup keeps whichever scores higher.
  std::ostringstream detail;
  detail << candidates.size() << "/" << corpus.test.size() << " kept as informative; ";
  for (auto cat : fixtures::test_categories()) {
    const auto q = fixtures::query_for(cat);
    const auto ranker = cs::fit_ranker(corpus.train.messages(), q, ctx, fixtures::small_model_config(), 1);
    const auto qe = cs::embed_query(q, enc);
    const auto full = cs::rank_detailed(candidates, qe, ranker, ctx, {1000, 0.95});
    std::set<std::string> kept;
    for (const auto& c : full.candidates) kept.insert(c.message_id);

    std::set<std::string> top10;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, full.candidates.size()); ++i) {
      top10.insert(full.candidates[i].message_id);
    }
    std::size_t hits = 0;
    for (const auto& id : corpus.planted.at(cat)) {
      bool hit = top10.count(id) != 0;
      for (const auto& [dup, src] : corpus.duplicate_of) {
        if (src == id && top10.count(dup)) hit = true;
      }
      hits += hit;
    }
    detail << cs::to_string(cat) << " recall@10=" << hits << "/5 ";
    out.require(hits == corpus.planted.at(cat).size(), std::string(cs::to_string(cat)) + " recall@10 below 1");
    // Dedup is checked on the unfiltered event too, so a duplicate the
    // classifier happened to drop cannot hide a dedup failure.
    const auto unfiltered = cs::rank_detailed(corpus.test.messages(), qe, ranker, ctx, {1000, 0.95});
    std::set<std::string> kept_all;
    for (const auto& c : unfiltered.candidates) kept_all.insert(c.message_id);
    for (const auto& [dup, src] : corpus.duplicate_of) {
      out.require(!(kept.count(dup) && kept.count(src)), "duplicate pair survived: " + dup + "/" + src);
      out.require(!(kept_all.count(dup) && kept_all.count(src)), "duplicate pair survived: " + dup + "/" + src);
      out.require(kept_all.count(dup) || kept_all.count(src), "both copies removed: " + dup + "/" + src);
    }
  }
  out.detail = detail.str() + (out.ok ? "" : "| " + out.detail);
  return out;
}

Outcome classifier_sanity() {
  Outcome out;
  cs::ModelConfig cfg;  // reference architecture
  cfg.epochs = 50;
  const std::size_t dim = 16;
  const auto data = fixtures::separable_examples(200, dim, 21);
  auto a = cs::build_model(cfg, dim, false, 4);
  const auto ha = cs::train_model(a, data, cfg, 4);
  auto b = cs::build_model(cfg, dim, false, 4);
  const auto hb = cs::train_model(b, data, cfg, 4);
  const double acc = cs::accuracy(a, data);
  out.require(ha.epochs.size() <= 50, "more than 50 epochs");
  out.require(acc >= 0.95, "accuracy " + std::to_string(acc));
  out.require(ha.losses() == hb.losses(), "loss histories differ under the same seed");
  if (out.ok) {
    out.detail = "accuracy " + std::to_string(acc) + " after " + std::to_string(ha.epochs.size()) +
                 " epochs, histories identical";
  }
  return out;
}

cs::Message labeled(std::string id, std::string lang, std::string event, bool informative) {
  cs::Message m;
  m.id = std::move(id);
  m.text = "message " + m.id;
  m.lang = std::move(lang);
  m.event_id = std::move(event);
  m.informative = informative;
  return m;
}

Outcome harness_shape() {
  Outcome out;
  std::vector<cs::EventCollection> corpus;
  for (const std::string ev : {"alpha", "beta"}) {
    std::vector<cs::Message> ms;
    for (const std::string lang : {"en", "es", "fr"}) {
      for (int i = 0; i < 6; ++i) ms.push_back(labeled(ev + lang + std::to_string(i), lang, ev, i < 3));
    }
    corpus.emplace_back(ev, ev, ms);
  }
  // Labels 1 1 1 0 0 0; scores give predictions 1 0 1 0 1 0.
  const std::map<char, double> by_pos = {{'0', 0.9}, {'1', 0.4}, {'2', 0.6}, {'3', 0.2}, {'4', 0.7}, {'5', 0.1}};
  auto scorer = [&](const cs::SplitPair& split, std::span<const cs::Message> test) {
    std::set<std::string> train_ids;
    for (const auto& m : split.train) train_ids.insert(m.id);
    for (const auto& m : test) out.require(!train_ids.count(m.id), "test message in training split");
    std::set<std::string> all = train_ids;
    for (const auto& m : test) all.insert(m.id);
    const auto& ev = cs::find_event(corpus, test.front().event_id);
    out.require(all.size() == ev.size(), "train + test do not cover the event");
    std::vector<double> s;
    for (const auto& m : test) s.push_back(by_pos.at(m.id.back()));
    return s;
  };
  const auto folds = cs::run_lolo(corpus, scorer);
  out.require(folds.size() == 6, "expected 6 fold rows, got " + std::to_string(folds.size()));
  for (const auto& f : folds) {
    out.require(f.metrics.has_value(), "fold failed: " + f.error);
    if (!f.metrics) continue;
    out.require(f.train_size == 12 && f.test_size == 6, "fold sizes");
    out.require(std::abs(f.metrics->acc - 4.0 / 6.0) < 1e-12, "accuracy != 4/6");
    out.require(std::abs(f.metrics->f1_weighted - 2.0 / 3.0) < 1e-12, "weighted F1 != 2/3");
    out.require(f.metrics->auc && std::abs(*f.metrics->auc - 7.0 / 9.0) < 1e-12, "AUC != 7/9");
  }
  const auto csv = cs::folds_to_csv(folds);
  out.require(std::count(csv.begin(), csv.end(), '\n') == 7, "CSV should have a header and 6 rows");
  if (out.ok) out.detail = "6 rows, acc 4/6, F1 2/3, AUC 7/9, partition holds";
  return out;
}

Outcome report_similarity_oracle() {
  Outcome out;
  cs::MockEncoder enc(32, 9);
  cs::WordTokenEncoder tok(enc);
  static const std::vector<std::string> words = {"flood", "river", "bridge", "closed", "rain", "storm", "help",
                                                 "water", "school", "road", "power", "north"};
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_int_distribution<int> len(1, 10);
  auto text = [&] {
    std::string t;
    const int l = len(rng);
    for (int i = 0; i < l; ++i) t += (i ? " " : "") + words[pick(rng)];
    return t;
  };
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = text();
    const auto b = text();
    const auto got = cs::report_similarity(a, b, tok);
    const auto ea = tok.encode_tokens(a);
    const auto eb = tok.encode_tokens(b);
    double p = 0, r = 0;
    for (const auto& x : ea) {
      double best = -2;
      for (const auto& y : eb) best = std::max(best, naive_cosine(x, y));
      p += std::max(best, 0.0);
    }
    for (const auto& y : eb) {
      double best = -2;
      for (const auto& x : ea) best = std::max(best, naive_cosine(x, y));
      r += std::max(best, 0.0);
    }
    p /= static_cast<double>(ea.size());
    r /= static_cast<double>(eb.size());
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    worst = std::max({worst, std::abs(got.precision - p), std::abs(got.recall - r), std::abs(got.f1 - f)});
    const auto self = cs::report_similarity(a, a, tok);
    out.require(std::abs(self.f1 - 1.0) <= 1e-9, "self-similarity " + std::to_string(self.f1));
  }
  out.require(worst <= 1e-9, "max deviation " + std::to_string(worst));
  if (out.ok) out.detail = "200 pairs, max |diff| " + sci(worst) + ", self-similarity 1";
  return out;
}

struct Criterion {
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"similarity-feature oracle", 1, similarity_oracle},
      {"feature scaling invariants", 5, scaling_invariants},
      {"AUC and F1 oracle equivalence", 5, auc_f1_oracle},
      {"cluster-count selection", 10, cluster_count},
      {"diversified summary structure", 5, diversified_structure},
      {"end-to-end cross-lingual retrieval", 30, end_to_end_retrieval},
      {"classifier sanity", 120, classifier_sanity},
      {"evaluation harness shape", 30, harness_shape},
      {"report-similarity oracle", 5, report_similarity_oracle},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) {
      o.ok = false;
      o.detail += " (over the " + std::to_string(static_cast<int>(c.limit_s)) + " s limit)";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (o.ok ? "PASS" : "FAIL") << "  " << c.name << "  [" << timing << "]  " << o.detail << "\n";
    failed += o.ok ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
