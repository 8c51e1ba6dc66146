#pragma once

// Per-message feature pipeline shared by the classifier and the ranker.

#include <span>
#include <string>
#include <vector>

#include "crisisscope/corpus.hpp"
#include "crisisscope/encoder.hpp"
#include "crisisscope/linguistic.hpp"
#include "crisisscope/text.hpp"

namespace crisisscope {

/// Backends used to turn a message into model inputs.
struct FeatureContext {
  const EncoderBackend& encoder;
  const AnnotatorRegistry& annotators;
};

struct MessageFeatures {
  std::string normalized;
  std::vector<Embedding> sentences;  // one per sentence of the normalized text
  Embedding whole;                   // embedding of the full normalized text
  RawFeatures raw{};
};

inline MessageFeatures featurize(const Message& message, const FeatureContext& ctx) {
  MessageFeatures f;
  f.normalized = normalize(message.text);
  const auto annotation = ctx.annotators.backend_for(message.lang).annotate(f.normalized, message.lang);
  f.raw = extract_features(annotation, message);
  auto sentences = split_sentences(f.normalized);
  sentences.push_back(f.normalized);
  auto vectors = ctx.encoder.encode(sentences);
  f.whole = std::move(vectors.back());
  vectors.pop_back();
  f.sentences = std::move(vectors);
  return f;
}

inline std::vector<MessageFeatures> featurize_all(std::span<const Message> messages,
                                                  const FeatureContext& ctx) {
  std::vector<MessageFeatures> out;
  out.reserve(messages.size());
  for (const auto& m : messages) out.push_back(featurize(m, ctx));
  return out;
}

}  // namespace crisisscope
