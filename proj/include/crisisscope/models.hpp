#pragma once

// Feature-fusion network shared by the informative-message classifier and the
// query-conditioned ranker, plus training, inference, ranking and checkpoints.
//
// Branches:
//   sentence embeddings -> LSTM -> MLP (sigmoid, dropout)
//   15 scaled text features -> MLP (relu)
//   6 similarity features  -> MLP (relu)            [ranker only]
// concatenated into a 2-way softmax (index 1 = positive class).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/corpus.hpp"
#include "crisisscope/encoder.hpp"
#include "crisisscope/error.hpp"
#include "crisisscope/features.hpp"
#include "crisisscope/linguistic.hpp"
#include "crisisscope/nn.hpp"
#include "crisisscope/queries.hpp"

namespace crisisscope {

struct ModelConfig {
  std::size_t lstm_units = 128;
  std::vector<std::size_t> embedding_widths = {1024, 256, 128};
  double embedding_dropout = 0.5;
  std::string embedding_activation = "sigmoid";
  std::vector<std::size_t> text_widths = {128, 24};
  std::string text_activation = "relu";
  std::vector<std::size_t> similarity_widths = {128, 24};
  std::string similarity_activation = "relu";
  double learning_rate = 0.001;
  std::size_t batch_size = 100;
  std::size_t epochs = 10;
  std::size_t patience = 3;  // 0 disables early stopping
  double validation_fraction = 0.1;

  void validate() const {
    auto widths_ok = [](const std::vector<std::size_t>& w) {
      return !w.empty() && std::all_of(w.begin(), w.end(), [](auto x) { return x > 0; });
    };
    if (lstm_units == 0) throw ValidationError("model config: lstm_units must be positive");
    if (!widths_ok(embedding_widths) || !widths_ok(text_widths) || !widths_ok(similarity_widths)) {
      throw ValidationError("model config: every branch needs at least one positive width");
    }
    if (!(embedding_dropout >= 0.0 && embedding_dropout < 1.0)) {
      throw ValidationError("model config: dropout must be in [0, 1)");
    }
    if (!(learning_rate > 0.0)) throw ValidationError("model config: learning_rate must be positive");
    if (batch_size == 0) throw ValidationError("model config: batch_size must be positive");
    if (epochs == 0) throw ValidationError("model config: epochs must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 0.5)) {
      throw ValidationError("model config: validation_fraction must be in [0, 0.5)");
    }
    for (const auto& a : {embedding_activation, text_activation, similarity_activation}) {
      nn::activation_from_string(a);
    }
  }

  nlohmann::json to_json() const {
    return {{"lstm_units", lstm_units},
            {"embedding_widths", embedding_widths},
            {"embedding_dropout", embedding_dropout},
            {"embedding_activation", embedding_activation},
            {"text_widths", text_widths},
            {"text_activation", text_activation},
            {"similarity_widths", similarity_widths},
            {"similarity_activation", similarity_activation},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"patience", patience},
            {"validation_fraction", validation_fraction}};
  }

  /// Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    if (!j.is_object()) throw SchemaError("model config must be a JSON object");
    const auto known = c.to_json();
    for (const auto& [k, _] : j.items()) {
      if (!known.contains(k)) throw SchemaError("model config: unknown key '" + k + "'");
    }
    try {
      c.lstm_units = j.value("lstm_units", c.lstm_units);
      c.embedding_widths = j.value("embedding_widths", c.embedding_widths);
      c.embedding_dropout = j.value("embedding_dropout", c.embedding_dropout);
      c.embedding_activation = j.value("embedding_activation", c.embedding_activation);
      c.text_widths = j.value("text_widths", c.text_widths);
      c.text_activation = j.value("text_activation", c.text_activation);
      c.similarity_widths = j.value("similarity_widths", c.similarity_widths);
      c.similarity_activation = j.value("similarity_activation", c.similarity_activation);
      c.learning_rate = j.value("learning_rate", c.learning_rate);
      c.batch_size = j.value("batch_size", c.batch_size);
      c.epochs = j.value("epochs", c.epochs);
      c.patience = j.value("patience", c.patience);
      c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

/// One network input. `similarity` must be present exactly when the model
/// has a similarity branch.
struct Example {
  std::vector<Embedding> sentences;
  ScaledFeatures text{};
  std::optional<SimilarityFeatures> similarity;
  int label = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double accuracy = 0.0;  // on the fitting portion, inference mode
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  std::vector<double> losses() const {
    std::vector<double> out;
    for (const auto& e : epochs) out.push_back(e.loss);
    return out;
  }

  nlohmann::json to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& e : epochs) {
      arr.push_back({{"epoch", e.epoch},
                     {"loss", e.loss},
                     {"val_loss", std::isnan(e.val_loss) ? nlohmann::json() : nlohmann::json(e.val_loss)},
                     {"accuracy", e.accuracy}});
    }
    return {{"epochs", arr}, {"best_epoch", best_epoch}, {"stopped_early", stopped_early}};
  }
};

class FusionModel {
 public:
  struct BranchWidths {
    std::vector<std::size_t> embedding;
    std::vector<std::size_t> text;
    std::vector<std::size_t> similarity;  // empty without the similarity branch
  };

  FusionModel(const ModelConfig& config, std::size_t embedding_dim, bool with_similarity_branch)
      : config_(config), embedding_dim_(embedding_dim), with_similarity_(with_similarity_branch) {
    config_.validate();
    if (embedding_dim == 0) throw ValidationError("model: embedding dimension must be positive");
    const auto idx = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
    lstm_ = nn::Lstm(idx(embedding_dim), idx(config_.lstm_units));
    std::size_t in = config_.lstm_units;
    for (auto w : config_.embedding_widths) {
      emb_.emplace_back(idx(in), idx(w), nn::activation_from_string(config_.embedding_activation),
                        config_.embedding_dropout);
      in = w;
    }
    in = kNumTextFeatures;
    for (auto w : config_.text_widths) {
      text_.emplace_back(idx(in), idx(w), nn::activation_from_string(config_.text_activation));
      in = w;
    }
    if (with_similarity_) {
      in = kNumSimilarityFeatures;
      for (auto w : config_.similarity_widths) {
        sim_.emplace_back(idx(in), idx(w), nn::activation_from_string(config_.similarity_activation));
        in = w;
      }
    }
    std::size_t fused = config_.embedding_widths.back() + config_.text_widths.back();
    if (with_similarity_) fused += config_.similarity_widths.back();
    out_ = nn::Dense(idx(fused), 2, nn::Activation::Linear);
  }

  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    lstm_.init(rng);
    for (auto& l : emb_) l.init(rng);
    for (auto& l : text_) l.init(rng);
    for (auto& l : sim_) l.init(rng);
    out_.init(rng);
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  bool has_similarity_branch() const noexcept { return with_similarity_; }

  BranchWidths branch_widths() const {
    BranchWidths w;
    for (const auto& l : emb_) w.embedding.push_back(static_cast<std::size_t>(l.out_dim()));
    for (const auto& l : text_) w.text.push_back(static_cast<std::size_t>(l.out_dim()));
    for (const auto& l : sim_) w.similarity.push_back(static_cast<std::size_t>(l.out_dim()));
    return w;
  }

  /// Throws ValidationError when an example does not match the input contract.
  void check_input(const Example& ex) const {
    if (ex.sentences.empty()) throw ValidationError("model input: empty sentence-embedding sequence");
    for (const auto& e : ex.sentences) {
      if (static_cast<std::size_t>(e.size()) != embedding_dim_) {
        throw ValidationError("model input: embedding dimension " + std::to_string(e.size()) +
                              ", model expects " + std::to_string(embedding_dim_));
      }
    }
    if (ex.similarity.has_value() != with_similarity_) {
      throw ValidationError(with_similarity_
                                ? "model input: ranker requires the 6 similarity features"
                                : "model input: classifier does not accept similarity features");
    }
  }

  /// Raw logits (2 x B) in inference mode.
  nn::Matrix logits(std::span<const Example> batch) const {
    nn::Matrix h(lstm_.units(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      check_input(batch[b]);
      h.col(static_cast<Eigen::Index>(b)) = lstm_.last_hidden(sequence_matrix(batch[b]));
    }
    nn::Matrix e = h;
    for (const auto& l : emb_) e = l.apply(e);
    nn::Matrix t = text_matrix(batch);
    for (const auto& l : text_) t = l.apply(t);
    nn::Matrix fused;
    if (with_similarity_) {
      nn::Matrix s = sim_matrix(batch);
      for (const auto& l : sim_) s = l.apply(s);
      fused = stack({&e, &t, &s});
    } else {
      fused = stack({&e, &t});
    }
    return out_.apply(fused);
  }

  /// Class probabilities (2 x B); row 1 is the positive class.
  nn::Matrix probabilities(std::span<const Example> batch) const { return nn::softmax(logits(batch)); }

  double positive_probability(const Example& ex) const {
    return probabilities(std::span<const Example>(&ex, 1))(1, 0);
  }

  /// Training step: forward with dropout, mean cross-entropy, backward.
  /// Gradients are accumulated into the parameters; returns the mean loss.
  double accumulate_gradients(std::span<const Example* const> batch, nn::Rng& rng) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    std::vector<nn::Matrix> seqs;
    seqs.reserve(batch.size());
    nn::Matrix t(static_cast<Eigen::Index>(kNumTextFeatures), n);
    nn::Matrix s;
    if (with_similarity_) s.resize(static_cast<Eigen::Index>(kNumSimilarityFeatures), n);
    for (Eigen::Index b = 0; b < n; ++b) {
      const Example& ex = *batch[static_cast<std::size_t>(b)];
      check_input(ex);
      seqs.push_back(sequence_matrix(ex));
      for (std::size_t i = 0; i < kNumTextFeatures; ++i) t(static_cast<Eigen::Index>(i), b) = ex.text[i];
      if (with_similarity_) {
        for (std::size_t i = 0; i < kNumSimilarityFeatures; ++i) {
          s(static_cast<Eigen::Index>(i), b) = (*ex.similarity)[i];
        }
      }
    }
    nn::Matrix e = lstm_.forward(seqs);
    for (auto& l : emb_) e = l.forward(e, true, &rng);
    for (auto& l : text_) t = l.forward(t, true, &rng);
    if (with_similarity_) {
      for (auto& l : sim_) s = l.forward(s, true, &rng);
    }
    const nn::Matrix fused = with_similarity_ ? stack({&e, &t, &s}) : stack({&e, &t});
    const nn::Matrix probs = nn::softmax(out_.forward(fused, true, &rng));

    double loss = 0.0;
    nn::Matrix d_logits = probs;
    for (Eigen::Index b = 0; b < n; ++b) {
      const int y = batch[static_cast<std::size_t>(b)]->label;
      loss -= std::log(std::max(probs(y, b), 1e-12));
      d_logits(y, b) -= 1.0;
    }
    d_logits /= static_cast<double>(n);
    loss /= static_cast<double>(n);

    const nn::Matrix d_fused = out_.backward(d_logits);
    const Eigen::Index we = e.rows();
    const Eigen::Index wt = t.rows();
    nn::Matrix d_e = d_fused.topRows(we);
    nn::Matrix d_t = d_fused.middleRows(we, wt);
    for (auto it = emb_.rbegin(); it != emb_.rend(); ++it) d_e = it->backward(d_e);
    lstm_.backward(d_e);
    for (auto it = text_.rbegin(); it != text_.rend(); ++it) d_t = it->backward(d_t);
    if (with_similarity_) {
      nn::Matrix d_s = d_fused.bottomRows(d_fused.rows() - we - wt);
      for (auto it = sim_.rbegin(); it != sim_.rend(); ++it) d_s = it->backward(d_s);
    }
    return loss;
  }

  /// Every trainable tensor in a fixed order (also the checkpoint order).
  std::vector<nn::Param*> parameters() {
    std::vector<nn::Param*> ps = {&lstm_.input_weights(), &lstm_.recurrent_weights(), &lstm_.bias()};
    for (auto* group : {&emb_, &text_, &sim_}) {
      for (auto& l : *group) {
        ps.push_back(&l.weights());
        ps.push_back(&l.bias());
      }
    }
    ps.push_back(&out_.weights());
    ps.push_back(&out_.bias());
    return ps;
  }

  std::vector<const nn::Param*> parameters() const {
    auto ps = const_cast<FusionModel*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Copies the embedding, text and output weights of a model without a
  /// similarity branch and zeroes the output weights reading the similarity
  /// branch, so both models score identically.
  void copy_shared_from(const FusionModel& classifier) {
    if (!with_similarity_ || classifier.with_similarity_) {
      throw ValidationError("copy_shared_from: expects ranker <- classifier");
    }
    if (classifier.embedding_dim_ != embedding_dim_) {
      throw ValidationError("copy_shared_from: embedding dimension differs");
    }
    lstm_ = classifier.lstm_;
    emb_ = classifier.emb_;
    text_ = classifier.text_;
    const Eigen::Index shared = classifier.out_.in_dim();
    out_.weights().value.leftCols(shared) = classifier.out_.weights().value;
    out_.weights().value.rightCols(out_.in_dim() - shared).setZero();
    out_.bias().value = classifier.out_.bias().value;
  }

  nlohmann::json params_to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto* p : parameters()) arr.push_back(p->to_json());
    return arr;
  }

  void load_params_json(const nlohmann::json& arr) {
    auto ps = parameters();
    if (!arr.is_array() || arr.size() != ps.size()) {
      throw ValidationError("checkpoint parameter list does not match model structure");
    }
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->load_json(arr[i]);
  }

 private:
  nn::Matrix sequence_matrix(const Example& ex) const {
    nn::Matrix m(static_cast<Eigen::Index>(embedding_dim_), static_cast<Eigen::Index>(ex.sentences.size()));
    for (std::size_t i = 0; i < ex.sentences.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = ex.sentences[i];
    return m;
  }

  static nn::Matrix text_matrix(std::span<const Example> batch) {
    nn::Matrix t(static_cast<Eigen::Index>(kNumTextFeatures), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t i = 0; i < kNumTextFeatures; ++i) {
        t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = batch[b].text[i];
      }
    }
    return t;
  }

  static nn::Matrix sim_matrix(std::span<const Example> batch) {
    nn::Matrix s(static_cast<Eigen::Index>(kNumSimilarityFeatures), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t i = 0; i < kNumSimilarityFeatures; ++i) {
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = (*batch[b].similarity)[i];
      }
    }
    return s;
  }

  static nn::Matrix stack(std::initializer_list<const nn::Matrix*> parts) {
    Eigen::Index rows = 0;
    for (const auto* p : parts) rows += p->rows();
    nn::Matrix out(rows, (*parts.begin())->cols());
    Eigen::Index r = 0;
    for (const auto* p : parts) {
      out.middleRows(r, p->rows()) = *p;
      r += p->rows();
    }
    return out;
  }

  ModelConfig config_;
  std::size_t embedding_dim_;
  bool with_similarity_;
  nn::Lstm lstm_;
  std::vector<nn::Dense> emb_;
  std::vector<nn::Dense> text_;
  std::vector<nn::Dense> sim_;
  nn::Dense out_;
};

inline FusionModel build_model(const ModelConfig& config, std::size_t embedding_dim,
                               bool with_similarity_branch, std::uint64_t seed = 0) {
  FusionModel model(config, embedding_dim, with_similarity_branch);
  model.init(seed);
  return model;
}

inline double mean_loss(const FusionModel& model, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  const nn::Matrix p = model.probabilities(data);
  double loss = 0.0;
  for (std::size_t b = 0; b < data.size(); ++b) {
    loss -= std::log(std::max(p(data[b].label, static_cast<Eigen::Index>(b)), 1e-12));
  }
  return loss / static_cast<double>(data.size());
}

/// Positive iff p(positive) > 0.5; an exact tie goes to the negative class.
inline int decide(double positive_probability) { return positive_probability > 0.5 ? 1 : 0; }

inline double accuracy(const FusionModel& model, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  const nn::Matrix p = model.probabilities(data);
  std::size_t hit = 0;
  for (std::size_t b = 0; b < data.size(); ++b) {
    hit += decide(p(1, static_cast<Eigen::Index>(b))) == data[b].label ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

/// Moves ceil(fraction * class size) examples of each class, taken from the
/// back, out of `data`; every class keeps at least one. An unstratified slice
/// can miss the minority class and then rewards the trivial model.
inline std::vector<Example> stratified_holdout(std::vector<Example>& data, double fraction) {
  std::vector<Example> fit;
  std::vector<Example> held;
  for (int cls : {0, 1}) {
    std::vector<Example*> members;
    for (auto& ex : data) {
      if (ex.label == cls) members.push_back(&ex);
    }
    if (members.empty()) continue;
    const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size())));
    const std::size_t n_held = std::min(want, members.size() - 1);
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < members.size() - n_held ? fit : held).push_back(std::move(*members[i]));
    }
  }
  data = std::move(fit);
  return held;
}

/// Mini-batch Adam on cross-entropy. With patience > 0 and at least 10
/// examples, a seeded stratified slice is held out and training stops once
/// its loss fails to improve for `patience` epochs; the best weights are kept.
inline TrainingHistory train_model(FusionModel& model, std::vector<Example> data,
                                   const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  bool pos = false;
  bool neg = false;
  for (const auto& ex : data) {
    if (ex.label != 0 && ex.label != 1) throw ValidationError("training labels must be 0 or 1");
    (ex.label == 1 ? pos : neg) = true;
    model.check_input(ex);
  }
  if (!pos || !neg) throw ValidationError("training set must contain both classes");

  nn::Rng rng(seed ^ 0x5DEECE66DULL);
  std::shuffle(data.begin(), data.end(), rng);
  std::vector<Example> validation;
  if (config.patience > 0 && data.size() >= 10 && config.validation_fraction > 0.0) {
    validation = stratified_holdout(data, config.validation_fraction);
    std::shuffle(data.begin(), data.end(), rng);
  }

  nn::Adam adam({config.learning_rate});
  TrainingHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<nn::Matrix> best_params;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      model.zero_grad();
      epoch_loss += model.accumulate_gradients(batch, rng) * static_cast<double>(batch.size());
      adam.step(model.parameters());
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss / static_cast<double>(data.size());
    stats.accuracy = accuracy(model, data);
    if (!validation.empty()) {
      stats.val_loss = mean_loss(model, validation);
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best_params.clear();
        for (const auto* p : std::as_const(model).parameters()) best_params.push_back(p->value);
        history.best_epoch = epoch;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      history.best_epoch = epoch;
    }
    history.epochs.push_back(stats);
    if (!validation.empty() && since_best >= config.patience) {
      history.stopped_early = epoch < config.epochs;
      break;
    }
  }
  if (!best_params.empty()) {
    auto ps = model.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = best_params[i];
  }
  return history;
}

// ---------------------------------------------------------------------------
// Classifier and ranker over messages

/// A trained network together with the scaler and encoder identity it was trained with.
struct TrainedModel {
  FusionModel model;
  FeatureScaler scaler;
  std::string backend_identity;
  std::uint64_t seed = 0;
  TrainingHistory history;
  std::optional<Query> query;  // ranker only

  bool is_ranker() const { return model.has_similarity_branch(); }

  void check_backend(const EncoderBackend& encoder) const {
    if (encoder.identity() != backend_identity) {
      throw ValidationError("backend mismatch: model trained with '" + backend_identity +
                            "', got '" + encoder.identity() + "'");
    }
  }
};

using TrainedClassifier = TrainedModel;
using TrainedRanker = TrainedModel;

inline bool is_informative(const Message& m) {
  return m.informative.value_or(false) || !m.categories.empty();
}

inline Example make_example(const MessageFeatures& f, const FeatureScaler& scaler,
                            std::optional<SimilarityFeatures> similarity = std::nullopt, int label = 0) {
  return Example{f.sentences, scaler.apply(f.raw), similarity, label};
}

/// Trains `model` on the labeled messages of `train` (unlabeled ones are skipped).
inline TrainedClassifier train_classifier(FusionModel model, std::span<const Message> train,
                                          const FeatureScaler& scaler, const FeatureContext& ctx,
                                          const ModelConfig& config, std::uint64_t seed) {
  if (model.has_similarity_branch()) throw ValidationError("train_classifier: model has a similarity branch");
  std::vector<Example> data;
  for (const auto& m : train) {
    if (!m.informative) continue;
    data.push_back(make_example(featurize(m, ctx), scaler, std::nullopt, *m.informative ? 1 : 0));
  }
  auto history = train_model(model, std::move(data), config, seed);
  return TrainedClassifier{std::move(model), scaler, ctx.encoder.identity(), seed, std::move(history), std::nullopt};
}

/// Fits the scaler on the labeled training messages, builds and trains a classifier.
inline TrainedClassifier fit_classifier(std::span<const Message> train, const FeatureContext& ctx,
                                        const ModelConfig& config, std::uint64_t seed) {
  std::vector<RawFeatures> raw;
  for (const auto& m : train) {
    if (m.informative) raw.push_back(featurize(m, ctx).raw);
  }
  if (raw.empty()) throw ValidationError("train_classifier: no labeled training messages");
  auto scaler = fit_scaler(raw);
  auto model = build_model(config, ctx.encoder.dimension(), false, seed);
  return train_classifier(std::move(model), train, scaler, ctx, config, seed);
}

inline double predict_informative(const TrainedClassifier& clf, const Message& message,
                                  const FeatureContext& ctx) {
  clf.check_backend(ctx.encoder);
  if (clf.is_ranker()) throw ValidationError("predict_informative: model is a ranker");
  return clf.model.positive_probability(make_example(featurize(message, ctx), clf.scaler));
}

/// Positives carry the query category; negatives are informative messages without it.
inline TrainedRanker train_ranker(FusionModel model, std::span<const Message> train, const Query* query,
                                  const FeatureScaler& scaler, const FeatureContext& ctx,
                                  const ModelConfig& config, std::uint64_t seed) {
  if (query == nullptr) throw ValidationError("train_ranker: a query is required");
  if (!model.has_similarity_branch()) throw ValidationError("train_ranker: model lacks the similarity branch");
  const auto qe = embed_query(*query, ctx.encoder);
  std::vector<Example> data;
  for (const auto& m : train) {
    const bool positive = m.has_category(query->category);
    if (!positive && !is_informative(m)) continue;
    auto f = featurize(m, ctx);
    auto sim = similarity_features(f.whole, qe);
    data.push_back(make_example(f, scaler, sim, positive ? 1 : 0));
  }
  auto history = train_model(model, std::move(data), config, seed);
  return TrainedRanker{std::move(model), scaler, ctx.encoder.identity(), seed, std::move(history), *query};
}

inline TrainedRanker fit_ranker(std::span<const Message> train, const Query& query, const FeatureContext& ctx,
                                const ModelConfig& config, std::uint64_t seed) {
  std::vector<RawFeatures> raw;
  for (const auto& m : train) {
    if (m.has_category(query.category) || is_informative(m)) raw.push_back(featurize(m, ctx).raw);
  }
  if (raw.empty()) throw ValidationError("train_ranker: no informative training messages");
  auto scaler = fit_scaler(raw);
  auto model = build_model(config, ctx.encoder.dimension(), true, seed);
  return train_ranker(std::move(model), train, &query, scaler, ctx, config, seed);
}

struct RankedCandidate {
  std::string message_id;
  std::string lang;
  std::string text;             // raw message text
  std::string normalized_text;  // what the summarizer consumes
  double score = 0.0;
  SimilarityFeatures similarity{};
  std::size_t rank = 0;  // 1-based
  Embedding embedding;   // whole-message embedding, used for clustering
};

struct RankOptions {
  std::size_t k = 100;
  double near_duplicate_threshold = 0.95;
};

struct RankResult {
  std::vector<RankedCandidate> candidates;
  std::size_t considered = 0;  // candidates scored before dedup and the cut
  std::size_t exact_duplicates_removed = 0;
  std::size_t near_duplicates_removed = 0;
};

/// Scores candidates with the ranker, removes exact (normalized text) and
/// near (cosine >= threshold) duplicates keeping the better-scored one, and
/// returns the top k by score (ties: higher kw_max, then smaller id).
inline RankResult rank_detailed(std::span<const Message> candidates, const QueryEmbeddings& qe,
                                const TrainedRanker& ranker, const FeatureContext& ctx,
                                const RankOptions& opts = {}) {
  if (opts.k == 0) throw ValidationError("rank: k must be at least 1");
  if (!ranker.is_ranker()) throw ValidationError("rank: model has no similarity branch");
  ranker.check_backend(ctx.encoder);
  if (qe.backend_identity != ctx.encoder.identity()) {
    throw ValidationError("rank: query embeddings come from a different backend");
  }
  RankResult result;
  result.considered = candidates.size();
  if (candidates.empty()) return result;

  std::vector<RankedCandidate> scored;
  std::vector<Example> examples;
  scored.reserve(candidates.size());
  examples.reserve(candidates.size());
  for (const auto& m : candidates) {
    auto f = featurize(m, ctx);
    RankedCandidate c;
    c.message_id = m.id;
    c.lang = m.lang;
    c.text = m.text;
    c.normalized_text = f.normalized;
    c.similarity = similarity_features(f.whole, qe);
    c.embedding = f.whole;
    examples.push_back(make_example(f, ranker.scaler, c.similarity));
    scored.push_back(std::move(c));
  }
  const nn::Matrix probs = ranker.model.probabilities(examples);
  for (std::size_t i = 0; i < scored.size(); ++i) scored[i].score = probs(1, static_cast<Eigen::Index>(i));

  std::sort(scored.begin(), scored.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.similarity[1] != b.similarity[1]) return a.similarity[1] > b.similarity[1];
    return a.message_id < b.message_id;
  });

  std::unordered_set<std::string> seen_texts;
  for (auto& c : scored) {
    if (!seen_texts.insert(c.normalized_text).second) {
      ++result.exact_duplicates_removed;
      continue;
    }
    const bool near = std::any_of(result.candidates.begin(), result.candidates.end(), [&](const auto& kept) {
      return cosine(kept.embedding, c.embedding) >= opts.near_duplicate_threshold;
    });
    if (near) {
      ++result.near_duplicates_removed;
      continue;
    }
    result.candidates.push_back(std::move(c));
  }
  if (result.candidates.size() > opts.k) result.candidates.resize(opts.k);
  for (std::size_t i = 0; i < result.candidates.size(); ++i) result.candidates[i].rank = i + 1;
  return result;
}

inline std::vector<RankedCandidate> rank(std::span<const Message> candidates, const QueryEmbeddings& qe,
                                         const TrainedRanker& ranker, const FeatureContext& ctx,
                                         const RankOptions& opts = {}) {
  return rank_detailed(candidates, qe, ranker, ctx, opts).candidates;
}

inline nlohmann::ordered_json ranked_candidate_to_json(const RankedCandidate& c) {
  nlohmann::ordered_json j;
  j["rank"] = c.rank;
  j["id"] = c.message_id;
  j["lang"] = c.lang;
  j["text"] = c.text;
  j["score"] = c.score;
  j["similarity"] = {{"kw_avg", c.similarity[0]},    {"kw_max", c.similarity[1]},
                     {"tpl_avg", c.similarity[2]},   {"tpl_max", c.similarity[3]},
                     {"proto_avg", c.similarity[4]}, {"proto_max", c.similarity[5]}};
  return j;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json checkpoint_to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "crisisscope-checkpoint/1";
  j["kind"] = m.is_ranker() ? "ranker" : "classifier";
  j["config"] = m.model.config().to_json();
  j["embedding_dim"] = m.model.embedding_dim();
  j["scaler"] = m.scaler.to_json();
  j["backend_identity"] = m.backend_identity;
  j["seed"] = m.seed;
  j["history"] = m.history.to_json();
  if (m.query) j["query"] = query_to_json(*m.query);
  j["params"] = m.model.params_to_json();
  return j;
}

/// Refuses checkpoints trained under a different encoder identity.
inline TrainedModel checkpoint_from_json(const nlohmann::json& j, const EncoderBackend& encoder) {
  try {
    if (j.at("format") != "crisisscope-checkpoint/1") throw SchemaError("unsupported checkpoint format");
    const bool ranker = j.at("kind") == "ranker";
    FusionModel model(ModelConfig::from_json(j.at("config")), j.at("embedding_dim").get<std::size_t>(), ranker);
    model.load_params_json(j.at("params"));
    TrainedModel out{std::move(model), FeatureScaler::from_json(j.at("scaler")),
                     j.at("backend_identity").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                     TrainingHistory{}, std::nullopt};
    if (ranker) out.query = query_from_json(j.at("query"));
    out.check_backend(encoder);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace crisisscope
