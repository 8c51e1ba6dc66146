#pragma once

// Synthetic corpora shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "crisisscope/corpus.hpp"
#include "crisisscope/encoder.hpp"
#include "crisisscope/linguistic.hpp"
#include "crisisscope/models.hpp"
#include "crisisscope/queries.hpp"

namespace fixtures {

namespace cs = crisisscope;

inline const std::vector<std::string> kPseudoLanguages = {"xa", "xb", "xc"};

// Deterministic made-up word for `word` in pseudo-language `lang`.
inline std::string pseudo_word(const std::string& lang, const std::string& word) {
  static const char* consonants = "bdfgklmnprstvz";
  static const char* vowels = "aeiou";
  std::uint64_t state = cs::detail::fnv1a(lang + ":" + word);
  const std::size_t syllables = 2 + cs::detail::splitmix64(state) % 3;
  std::string out;
  for (std::size_t i = 0; i < syllables; ++i) {
    out += consonants[cs::detail::splitmix64(state) % 14];
    out += vowels[cs::detail::splitmix64(state) % 5];
  }
  return out + "q";  // no English word ends in q, so pseudo words never collide with canonical ones
}

/// Word-by-word pseudo translation; punctuation and digits are kept.
inline std::string translate(const std::string& lang, const std::string& text) {
  if (lang == "en") return text;
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isalpha(c)) {
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      out += pseudo_word(lang, cs::ascii_lower(text.substr(i, j - i)));
      i = j;
    } else {
      out += text[i++];
    }
  }
  return out;
}

// Sentence banks per category. Indices 0-4 are planted in the test event,
// 5-9 feed the training event.
inline const std::map<cs::CategoryId, std::vector<std::string>>& sentence_bank() {
  using C = cs::CategoryId;
  static const std::map<C, std::vector<std::string>> bank = {
      {C::Casualties,
       {"Around 150 people injured after the collapse", "Two people dead and many wounded in the village",
        "Hospital treating dozens of injured victims tonight", "Death toll rises to 12 as bodies recovered",
        "Rescue teams report several casualties near the river", "At least 40 injured and 3 dead so far",
        "Victims taken to hospital with serious injuries", "Officials confirm the death toll has climbed",
        "Many people wounded by falling debris downtown", "Injured residents evacuated by ambulance crews"}},
      {C::Damage,
       {"Roofs destroyed and houses damaged across town", "Collapsed bridge and damaged roads in the valley",
        "Orange trees and rice paddies destroyed by the storm", "Buildings badly damaged after the quake",
        "Destroyed cars and broken windows on the main street", "Damage to homes and farms is severe",
        "Walls collapsed and roofs torn off houses", "The old church was destroyed overnight",
        "Crops destroyed and fences damaged on farms", "Severe structural damage reported at the school"}},
      {C::Danger,
       {"Red warning issued, danger to life", "Stay indoors, alert remains in force tonight",
        "Avoid the coast, extreme danger warning", "Orange alert for the whole region until Sunday",
        "Caution advised, risk of landslides on roads", "Warning: do not travel, danger on the roads",
        "Authorities raise alert level to red", "Extreme risk, keep away from the cliffs",
        "Alert issued for dangerous conditions tomorrow", "Danger warning extended until further notice"}},
      {C::Government,
       {"Local authorities continue the search for missing persons", "Minister announces emergency funding today",
        "Government declares a state of emergency", "Mayor holds press conference on the response",
        "Civil protection agency coordinates the official response", "Prime minister visits the affected area",
        "Official statement from the regional government", "Council approves emergency aid package",
        "Authorities publish an official situation report", "Government deploys the army to assist"}},
      {C::Sensor,
       {"Earthquake of magnitude 5.3 hits the capital", "Seismic activity recorded near the volcano",
        "Tremor of magnitude 4 felt across the city", "Aftershock registered by the seismic network",
        "Volcano eruption detected by seismic sensors", "Magnitude 6 quake recorded at shallow depth",
        "Seismographs register continuous volcanic tremor", "Strong earthquake shakes the island",
        "Seismic station detects new tremors overnight", "Quake epicenter located offshore"}},
      {C::Service,
       {"Local group provides shelter for more than 1000 people", "Volunteers distribute food and blankets",
        "Free meals offered at the community centre", "Red Cross opens shelters for evacuees",
        "Donations of water and clothes being collected", "Shelter available at the sports hall",
        "Charity delivers supplies to families in need", "Volunteers needed to help distribute food",
        "Free transport offered to evacuated residents", "Emergency hotline set up for families"}},
      {C::Water,
       {"Floods in the lowlands after the river burst", "River overflowing and streets flooded",
        "Flood water reaches the town centre", "Sea level rising and beaches flooded",
        "Dam overflow causes flooding downstream", "Flooded fields and rivers breaking banks",
        "Flash flood warning for the river valley", "Water levels still rising in the delta",
        "Streets under water after the flood", "River flooding forces residents out"}},
      {C::Weather,
       {"Heavy rainfall and strong wind across the region", "Storm is hitting the coast with high winds",
        "Snow and rain forecast for tomorrow", "Wind gusts of 100 km/h recorded on the coast",
        "Bad weather expected all weekend", "Heavy snow and strong wind tonight",
        "Weather forecast predicts more rain", "Terrible rains and gusts of wind today",
        "Storm brings heavy rain to the north", "Rain and wind batter the coast"}},
  };
  return bank;
}

inline const std::vector<std::string>& chatter() {
  static const std::vector<std::string> lines = {
      "Thoughts and prayers for everyone", "So sad to see this", "Stay safe everyone",
      "Cannot believe what is happening", "Sending love from far away", "This is terrible news",
      "Hope everyone is okay", "Watching the news all day", "Praying for my family there",
      "What a week it has been", "Please share this post", "Let us all be strong",
  };
  return lines;
}

/// Alias table mapping every pseudo word of the fixture vocabulary back to English.
inline cs::AliasTable alias_table() {
  cs::AliasTable t;
  auto add = [&](const std::string& text) {
    for (std::size_t i = 0; i < text.size();) {
      if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      const auto lw = cs::ascii_lower(text.substr(i, j - i));
      for (const auto& lang : kPseudoLanguages) t[pseudo_word(lang, lw)] = lw;
      i = j;
    }
  };
  for (const auto& [cat, lines] : sentence_bank()) {
    for (const auto& l : lines) add(l);
  }
  for (const auto& l : chatter()) add(l);
  for (const auto& w : {"update", "news", "now", "again", "latest", "more"}) add(w);
  return t;
}

inline cs::Query query_for(cs::CategoryId c) {
  using C = cs::CategoryId;
  switch (c) {
    case C::Casualties:
      return {c, {"injured", "dead", "death", "victims", "wounded", "casualties"},
              {"NUMBER people injured", "death toll rises to NUMBER"},
              {"Many people injured and several dead", "Victims treated for injuries in hospital"}};
    case C::Damage:
      return {c, {"damaged", "destroyed", "collapsed", "roofs", "damage"},
              {"houses damaged in LOCATION", "buildings destroyed"},
              {"Houses and roads damaged by the disaster", "Roofs and buildings destroyed"}};
    case C::Water:
      return {c, {"flood", "flooded", "river", "water", "flooding"},
              {"flooding in LOCATION", "river burst its banks"},
              {"Streets flooded after the river overflowed", "Flood water rising in town"}};
    default:
      return {c, {"storm"}, {}, {}};
  }
}

inline const std::vector<cs::CategoryId>& test_categories() {
  static const std::vector<cs::CategoryId> cats = {cs::CategoryId::Casualties, cs::CategoryId::Damage,
                                                   cs::CategoryId::Water};
  return cats;
}

struct CrossLingualCorpus {
  cs::EventCollection train;
  cs::EventCollection test;
  std::map<cs::CategoryId, std::vector<std::string>> planted;  // test ids per category
  std::vector<std::string> exact_duplicates;                   // test ids that must be removed
  std::vector<std::string> near_duplicates;
  std::map<std::string, std::string> duplicate_of;             // duplicate id -> planted id
};

/// Test event: 150 messages in xa/xb/xc. Five planted relevant messages per
/// category, one exact and one near duplicate of a planted message per test
/// category, and chatter. Training event: sentences 5-9 of each category in
/// all three pseudo-languages plus English, with chatter as non-informative.
inline CrossLingualCorpus cross_lingual_corpus(std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  CrossLingualCorpus out;
  std::vector<cs::Message> test;
  std::size_t next = 0;
  auto add_test = [&](const std::string& text, const std::string& lang, std::set<cs::CategoryId> cats) {
    cs::Message m{"t" + std::to_string(next++), text, lang, "synthetic-test", cats.empty() ? false : true, cats};
    test.push_back(m);
    return m.id;
  };
  std::size_t li = 0;
  for (const auto& [cat, lines] : sentence_bank()) {
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& lang = kPseudoLanguages[li++ % 3];
      out.planted[cat].push_back(add_test(translate(lang, lines[i]), lang, {cat}));
    }
  }
  for (auto cat : test_categories()) {
    // Verbatim repost under a new id.
    const auto src = test[static_cast<std::size_t>(std::stoul(out.planted[cat][0].substr(1)))];
    out.exact_duplicates.push_back(add_test(src.text, src.lang, {cat}));
    out.duplicate_of[out.exact_duplicates.back()] = src.id;
    // Same words, extra punctuation: distinct text, same embedding.
    const auto src1 = test[static_cast<std::size_t>(std::stoul(out.planted[cat][1].substr(1)))];
    out.near_duplicates.push_back(add_test(src1.text + " !!!", src1.lang, {cat}));
    out.duplicate_of[out.near_duplicates.back()] = src1.id;
  }
  // Chatter made unique by two trailing filler words.
  static const std::vector<std::string> tails = {"update", "news", "now", "again", "latest", "more"};
  std::vector<std::string> lines;
  for (const auto& c : chatter()) {
    for (const auto& a : tails) {
      for (const auto& b : tails) {
        if (a != b) lines.push_back(c + " " + a + " " + b);
      }
    }
  }
  std::shuffle(lines.begin(), lines.end(), rng);
  for (std::size_t filler = 0; test.size() < 150; ++filler) {
    const auto& lang = kPseudoLanguages[filler % 3];
    add_test(translate(lang, lines[filler]), lang, {});
  }
  std::shuffle(test.begin(), test.end(), rng);
  out.test = cs::EventCollection("synthetic-test", "Synthetic test event", test);

  std::vector<cs::Message> train;
  std::vector<std::string> langs = kPseudoLanguages;
  langs.push_back("en");
  std::size_t n = 0;
  for (const auto& [cat, lines] : sentence_bank()) {
    for (std::size_t i = 5; i < lines.size(); ++i) {
      for (const auto& lang : langs) {
        train.push_back({"r" + std::to_string(n++), translate(lang, lines[i]), lang, "synthetic-train", true, {cat}});
      }
    }
  }
  for (std::size_t i = 0; i < chatter().size(); ++i) {
    for (const auto& lang : langs) {
      train.push_back({"r" + std::to_string(n++), translate(lang, chatter()[i]), lang, "synthetic-train", false, {}});
    }
  }
  out.train = cs::EventCollection("synthetic-train", "Synthetic training event", train);
  return out;
}

/// Mock-encoder width for retrieval on the synthetic event. Word vectors are
/// random, so cosine noise shrinks like 1/sqrt(dim); at 64 it rivals the
/// signal of a single shared keyword.
inline constexpr std::size_t kRetrievalDim = 256;

/// Rule annotators for English and the pseudo-languages.
inline cs::AnnotatorRegistry annotators() {
  cs::AnnotatorRegistry reg;
  auto rule = std::make_shared<cs::RuleAnnotator>();
  reg.register_backend("en", rule);
  for (const auto& l : kPseudoLanguages) reg.register_backend(l, rule);
  return reg;
}

/// Small network used where the full-width architecture is not under test.
inline cs::ModelConfig small_model_config() {
  cs::ModelConfig c;
  c.lstm_units = 16;
  c.embedding_widths = {32, 16};
  c.embedding_dropout = 0.1;
  c.text_widths = {16, 8};
  c.similarity_widths = {16, 8};
  c.learning_rate = 0.01;
  c.batch_size = 32;
  c.epochs = 40;
  c.patience = 5;
  return c;
}

/// Linearly separable two-blob data: each example is a single sentence
/// embedding of dimension `dim` and a text-feature vector, both shifted by
/// the class.
inline std::vector<cs::Example> separable_examples(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  cs::Embedding direction = cs::Embedding::Zero(static_cast<Eigen::Index>(dim));
  for (Eigen::Index d = 0; d < direction.size(); ++d) direction[d] = (d % 2 == 0) ? 1.0 : -1.0;
  direction.normalize();
  std::vector<cs::Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double sign = label == 1 ? 1.0 : -1.0;
    cs::Embedding e(static_cast<Eigen::Index>(dim));
    for (Eigen::Index d = 0; d < e.size(); ++d) e[d] = noise(rng) / std::sqrt(static_cast<double>(dim));
    e += sign * 0.8 * direction;
    cs::Example ex;
    ex.sentences = {e};
    for (std::size_t f = 0; f < cs::kNumTextFeatures; ++f) {
      ex.text[f] = std::clamp(0.5 + sign * 0.25 + noise(rng) * 0.2, 0.0, 1.0);
    }
    ex.label = label;
    out.push_back(std::move(ex));
  }
  return out;
}

/// Test-event messages the informative classifier keeps: the candidate
/// pool the ranker sees.
inline std::vector<cs::Message> informative_candidates(const CrossLingualCorpus& corpus, const cs::FeatureContext& ctx,
                                                       std::uint64_t seed) {
  const auto clf = cs::fit_classifier(corpus.train.messages(), ctx, small_model_config(), seed);
  std::vector<cs::Message> out;
  for (const auto& m : corpus.test.messages()) {
    if (cs::decide(cs::predict_informative(clf, m, ctx)) == 1) out.push_back(m);
  }
  return out;
}

}  // namespace fixtures
