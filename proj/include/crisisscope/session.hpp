#pragma once

// Loaded pipeline state shared by the CLI and the HTTP service: corpora,
// backends, trained rankers and query embeddings.

#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/config.hpp"
#include "crisisscope/corpus.hpp"
#include "crisisscope/features.hpp"
#include "crisisscope/models.hpp"
#include "crisisscope/queries.hpp"
#include "crisisscope/summarize.hpp"

namespace crisisscope {

class Session {
 public:
  explicit Session(PipelineConfig config) : config_(std::move(config)) {
    config_.summary.seed = config_.seed;
    if (config_.messages) events_ = load_events(*config_.messages);
    if (config_.train) train_ = load_events(*config_.train);
    std::set<std::string> langs;
    for (const auto* group : {&events_, &train_}) {
      for (const auto& e : *group) langs.insert(e.languages().begin(), e.languages().end());
    }
    encoder_ = make_encoder(config_.encoder);
    generator_ = make_generator(config_.generator);
    annotators_ = make_annotators(config_.annotator, langs);
    if (config_.queries) {
      for (const auto& entry : std::filesystem::directory_iterator(*config_.queries)) {
        if (entry.path().extension() != ".json") continue;
        queries_[entry.path().stem().string()] = parse_query(entry.path());
      }
    }
  }

  const PipelineConfig& config() const noexcept { return config_; }
  const EncoderBackend& encoder() const noexcept { return *encoder_; }
  const GenerationBackend& generator() const noexcept { return *generator_; }
  const AnnotatorRegistry& annotators() const noexcept { return annotators_; }
  FeatureContext context() const { return {*encoder_, annotators_}; }
  const std::vector<EventCollection>& events() const noexcept { return events_; }

  const EventCollection& event(const std::string& id) const { return find_event(events_, id); }

  nlohmann::ordered_json backends_json() const {
    nlohmann::ordered_json j;
    j["encoder"] = encoder_->identity();
    j["generator"] = generator_->identity();
    j["annotators"] = annotators_.languages();
    return j;
  }

  // Queries ---------------------------------------------------------------

  /// Creates or replaces a query; returns {id, created}.
  std::pair<std::string, bool> upsert_query(std::optional<std::string> id, Query q) {
    std::unique_lock lock(query_mutex_);
    if (!id || id->empty()) {
      const std::string base = ascii_lower(std::string(to_string(q.category)));
      std::string candidate = base;
      for (int n = 2; queries_.count(candidate) != 0; ++n) candidate = base + "-" + std::to_string(n);
      id = candidate;
    }
    const bool created = queries_.count(*id) == 0;
    queries_[*id] = std::move(q);
    return {*id, created};
  }

  Query query(const std::string& id) const {
    std::shared_lock lock(query_mutex_);
    auto it = queries_.find(id);
    if (it == queries_.end()) throw NotFoundError("unknown query id '" + id + "'");
    return it->second;
  }

  std::map<std::string, Query> queries() const {
    std::shared_lock lock(query_mutex_);
    return queries_;
  }

  // Ranking and summarization -------------------------------------------------

  /// Labeled messages a ranker for `event_id` trains on: the configured
  /// training file, else every other loaded event.
  std::vector<Message> ranker_training_set(const std::string& event_id) const {
    std::vector<Message> out;
    const auto& source = train_.empty() ? events_ : train_;
    for (const auto& e : source) {
      if (train_.empty() && e.event_id() == event_id) continue;
      for (const auto& m : e.messages()) {
        if (m.informative || !m.categories.empty()) out.push_back(m);
      }
    }
    if (out.empty()) throw ValidationError("no labeled training messages available for a ranker");
    return out;
  }

  /// Informative-message classifier used to pre-filter rank candidates,
  /// trained on the same labeled set as the rankers.
  std::shared_ptr<const TrainedClassifier> classifier(const std::string& event_id) const {
    const std::string key = train_.empty() ? event_id : std::string();
    return once(classifier_mutex_, classifiers_, key, [&] {
      return fit_classifier(ranker_training_set(event_id), context(), config_.model, config_.seed);
    });
  }

  /// The event's messages the classifier calls informative, in file order.
  std::shared_ptr<const std::vector<Message>> informative_messages(const std::string& event_id) const {
    const auto& ev = event(event_id);
    const auto clf = classifier(event_id);
    return once(prefilter_mutex_, prefiltered_, event_id, [&] {
      std::vector<Message> kept;
      std::vector<Example> examples;
      for (const auto& m : ev.messages()) examples.push_back(make_example(featurize(m, context()), clf->scaler));
      if (!examples.empty()) {
        const auto p = clf->model.probabilities(examples);
        for (std::size_t i = 0; i < examples.size(); ++i) {
          if (decide(p(1, static_cast<Eigen::Index>(i))) == 1) kept.push_back(ev.messages()[i]);
        }
      }
      return kept;
    });
  }

  /// Trained once per (query content, held-out event); concurrent callers share the work.
  std::shared_ptr<const TrainedRanker> ranker(const Query& q, const std::string& event_id) const {
    return once(ranker_mutex_, rankers_, ranker_key(q, event_id), [&] {
      return fit_ranker(ranker_training_set(event_id), q, context(), config_.model, config_.seed);
    });
  }

  void set_ranker(const Query& q, const std::string& event_id, TrainedRanker r) {
    r.check_backend(*encoder_);
    std::promise<std::shared_ptr<const TrainedRanker>> p;
    p.set_value(std::make_shared<const TrainedRanker>(std::move(r)));
    std::lock_guard lock(ranker_mutex_);
    rankers_.insert_or_assign(ranker_key(q, event_id), p.get_future().share());
  }

  /// Ranks the messages the classifier keeps.
  RankResult rank(const Query& q, const std::string& event_id, std::size_t k) const {
    const auto candidates = informative_messages(event_id);
    const auto r = ranker(q, event_id);
    const auto qe = query_cache_.get(q, *encoder_);
    return rank_detailed(*candidates, *qe, *r, context(), {k, 0.95});
  }

  Summary summarize(const Query& q, const std::string& event_id, SummaryMode mode, std::size_t budget,
                    std::size_t k) const {
    const auto ranked = rank(q, event_id, k);
    if (ranked.candidates.empty()) throw ValidationError("event '" + event_id + "' has no candidate messages");
    SummaryConfig cfg = config_.summary;
    cfg.mode = mode;
    cfg.budget = budget;
    return crisisscope::summarize(ranked.candidates, *generator_, cfg);
  }

 private:
  PipelineConfig config_;
  std::vector<EventCollection> events_;
  std::vector<EventCollection> train_;
  std::shared_ptr<const EncoderBackend> encoder_;
  std::shared_ptr<const GenerationBackend> generator_;
  AnnotatorRegistry annotators_;

  mutable std::shared_mutex query_mutex_;
  std::map<std::string, Query> queries_;

  template <typename T>
  using Slots = std::map<std::string, std::shared_future<std::shared_ptr<const T>>>;

  std::string ranker_key(const Query& q, const std::string& event_id) const {
    return query_to_json(q).dump() + "\n" + (train_.empty() ? event_id : std::string());
  }

  /// Computes slots[key] at most once; concurrent callers wait on the same
  /// result. A failure is not cached, so a later call retries.
  template <typename T, typename Make>
  static std::shared_ptr<const T> once(std::mutex& mutex, Slots<T>& slots, const std::string& key, Make make) {
    std::shared_future<std::shared_ptr<const T>> fut;
    std::promise<std::shared_ptr<const T>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mutex);
      auto it = slots.find(key);
      if (it == slots.end()) {
        fut = promise.get_future().share();
        slots.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const T>(make()));
      } catch (...) {
        {
          std::lock_guard lock(mutex);
          slots.erase(key);
        }
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  mutable std::mutex ranker_mutex_;
  mutable Slots<TrainedRanker> rankers_;
  mutable std::mutex classifier_mutex_;
  mutable Slots<TrainedClassifier> classifiers_;
  mutable std::mutex prefilter_mutex_;
  mutable Slots<std::vector<Message>> prefiltered_;
  mutable QueryEmbeddingCache query_cache_;
};

}  // namespace crisisscope
