#pragma once

// Linguistic annotation backends and the 15 message-level features.

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/corpus.hpp"
#include "crisisscope/error.hpp"
#include "crisisscope/text.hpp"

namespace crisisscope {

enum class EntityClass { Person, Place, Org, Date };

/// Maps spaCy/Stanza style labels onto the four entity classes. GPE and
/// LOC both become Place. Unknown labels yield nullopt.
inline std::optional<EntityClass> map_entity_label(std::string_view label) {
  if (label == "PERSON" || label == "PER") return EntityClass::Person;
  if (label == "GPE" || label == "LOC" || label == "PLACE") return EntityClass::Place;
  if (label == "ORG") return EntityClass::Org;
  if (label == "DATE") return EntityClass::Date;
  return std::nullopt;
}

struct Token {
  std::string surface;
  std::string pos;  // universal POS tag
  bool modal = false;
};

struct Dependency {
  int head;  // -1 for the sentence root
  std::size_t dependent;
  std::string relation;
};

struct EntitySpan {
  std::size_t begin;
  std::size_t end;  // exclusive token index
  EntityClass label;
};

struct Annotation {
  std::vector<Token> tokens;
  std::vector<Dependency> dependencies;
  std::vector<EntitySpan> entities;
  std::vector<std::size_t> sentence_starts;  // first token index of each sentence

  /// Throws ValidationError when indices are out of range or a sentence
  /// does not have exactly one root.
  void validate() const {
    const auto n = tokens.size();
    std::vector<int> roots(sentence_starts.size(), 0);
    auto sentence_of = [&](std::size_t tok) {
      auto it = std::upper_bound(sentence_starts.begin(), sentence_starts.end(), tok);
      return static_cast<std::size_t>(std::distance(sentence_starts.begin(), it)) - 1;
    };
    if (n > 0 && (sentence_starts.empty() || sentence_starts.front() != 0)) {
      throw ValidationError("annotation: first sentence must start at token 0");
    }
    if (!std::is_sorted(sentence_starts.begin(), sentence_starts.end()) ||
        (!sentence_starts.empty() && sentence_starts.back() >= std::max<std::size_t>(n, 1))) {
      throw ValidationError("annotation: bad sentence boundaries");
    }
    for (const auto& d : dependencies) {
      if (d.dependent >= n || d.head >= static_cast<int>(n) || d.head < -1) {
        throw ValidationError("annotation: dependency index out of token range");
      }
      if (d.relation == "root") ++roots[sentence_of(d.dependent)];
    }
    for (std::size_t s = 0; s < roots.size(); ++s) {
      if (roots[s] != 1) {
        throw ValidationError("annotation: sentence " + std::to_string(s) +
                              " must have exactly one root");
      }
    }
    for (const auto& e : entities) {
      if (e.begin >= e.end || e.end > n) throw ValidationError("annotation: bad entity span");
    }
  }
};

/// Contract for a per-language annotation backend. Backends that are not
/// safe for concurrent calls report so and get serialized.
class Annotator {
 public:
  virtual ~Annotator() = default;

  virtual std::string name() const = 0;
  virtual bool concurrent_safe() const { return true; }

  Annotation annotate(std::string_view text, std::string_view lang) const {
    Annotation a;
    if (concurrent_safe()) {
      a = do_annotate(text, lang);
    } else {
      std::lock_guard lock(mutex_);
      a = do_annotate(text, lang);
    }
    a.validate();
    return a;
  }

 protected:
  virtual Annotation do_annotate(std::string_view text, std::string_view lang) const = 0;

 private:
  mutable std::mutex mutex_;
};

/// Dictionary lexicon for the rule annotator.
struct Lexicon {
  std::unordered_map<std::string, std::string> pos;       // lower-case word -> UPOS
  std::unordered_set<std::string> modals;                 // lower-case modal auxiliaries
  std::unordered_map<std::string, std::string> entities;  // lower-case word -> NER label

  /// `{"pos": {word: tag}, "modals": [word], "entities": {word: label}}`; merged over *this.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("lexicon must be a JSON object");
    if (auto it = j.find("pos"); it != j.end()) {
      for (const auto& [w, t] : it->items()) pos[ascii_lower(w)] = t.get<std::string>();
    }
    if (auto it = j.find("modals"); it != j.end()) {
      for (const auto& w : *it) modals.insert(ascii_lower(w.get<std::string>()));
    }
    if (auto it = j.find("entities"); it != j.end()) {
      for (const auto& [w, l] : it->items()) {
        if (!map_entity_label(l.get<std::string>())) {
          throw SchemaError("lexicon: unknown entity label '" + l.get<std::string>() + "'");
        }
        entities[ascii_lower(w)] = l.get<std::string>();
      }
    }
  }

  /// Small English crisis vocabulary used by fixtures and desk-scale runs.
  static Lexicon english_default() {
    Lexicon lx;
    const char* nouns[] = {
        "authorities", "injured", "bridge", "people", "storm", "rain", "wind", "winds", "snow",
        "flood", "floods", "flooding", "fire", "fires", "crews", "houses", "house", "buildings",
        "building", "roads", "road", "power", "lines", "water", "earthquake", "magnitude",
        "damage", "shelter", "families", "residents", "government", "police", "hospital",
        "victims", "deaths", "dead", "casualties", "trees", "coast", "region", "city", "area",
        "weather", "forecast", "gusts", "gust", "rainfall", "ash", "volcano", "eruption",
        "evacuation", "warning", "alert", "danger", "help", "food", "river", "rivers", "town",
        "schools", "school", "flights", "search", "rescue", "service", "services", "aid",
        "supplies", "tsunami", "quake", "aftershock", "wildfire", "smoke", "village",
    };
    const char* verbs[] = {
        "report", "reports", "reported", "destroyed", "destroying", "damaged", "hit", "hits",
        "killed", "evacuate", "evacuated", "batter", "battered", "brought", "affect", "affected",
        "stay", "provides", "provide", "help", "continue", "continuing", "flooded", "burning",
        "collapsed", "closed", "issued", "warns", "left", "arrive", "arrived", "need", "needs",
        "is", "are", "was", "were", "has", "have",
    };
    const char* adverbs[] = {"very", "reportedly", "now", "still", "already", "heavily",
                             "inside", "so", "far", "tonight", "urgently"};
    const char* adjectives[] = {"heavy", "strong", "high", "bad", "severe", "terrible",
                                "safe", "local", "eastern", "western", "northern", "southern",
                                "red", "maximum", "fallen", "major", "dangerous", "huge"};
    const char* determiners[] = {"the", "a", "an", "this", "that", "these", "those", "some"};
    const char* adpositions[] = {"near", "in", "on", "at", "of", "from", "to", "across", "by",
                                 "for", "with", "after", "due", "than"};
    const char* pronouns[] = {"we", "they", "it", "he", "she", "you", "i"};
    for (auto w : nouns) lx.pos[w] = "NOUN";
    for (auto w : verbs) lx.pos[w] = "VERB";
    for (auto w : adverbs) lx.pos[w] = "ADV";
    for (auto w : adjectives) lx.pos[w] = "ADJ";
    for (auto w : determiners) lx.pos[w] = "DET";
    for (auto w : adpositions) lx.pos[w] = "ADP";
    for (auto w : pronouns) lx.pos[w] = "PRON";
    for (auto w : {"and", "or", "but"}) lx.pos[w] = "CCONJ";
    for (auto w : {"can", "could", "may", "might", "must", "shall", "should", "will", "would"}) {
      lx.modals.insert(w);
      lx.pos[w] = "AUX";
    }
    for (auto w : {"january", "february", "march", "april", "may", "june", "july", "august",
                   "september", "october", "november", "december", "monday", "tuesday",
                   "wednesday", "thursday", "friday", "saturday", "sunday", "today",
                   "yesterday"}) {
      lx.entities[w] = "DATE";
    }
    // "may" is both a modal and a month; the modal reading wins for tagging.
    lx.entities.erase("may");
    for (auto w : {"barcelona", "catalonia", "spain", "france", "zagreb", "croatia", "manila",
                   "philippines", "australia", "fukushima", "japan", "sydney", "taal",
                   "valencia"}) {
      lx.entities[w] = "GPE";
    }
    for (auto w : {"ercc", "unicef", "phivolcs", "aemet", "redcross"}) lx.entities[w] = "ORG";
    return lx;
  }
};

/// Deterministic dictionary/rule backend.
///
/// Tokens: whitespace split, with leading/trailing punctuation peeled into
/// PUNCT tokens. Tags: numerals -> NUM, lexicon lookup, `URL`/`USER` -> X,
/// otherwise X. Sentences end after `.`, `!` or `?` tokens. Per sentence the
/// root is the first VERB (else first AUX, else first non-PUNCT token); the
/// last NOUN/PROPN/PRON before a verbal root is its `nsubj`; a NOUN/PROPN
/// directly followed by another is a `compound` of it; modal auxiliaries
/// attach as `aux`; everything else attaches to the root as `dep`/`punct`.
class RuleAnnotator final : public Annotator {
 public:
  explicit RuleAnnotator(Lexicon lexicon = Lexicon::english_default())
      : lexicon_(std::move(lexicon)) {}

  std::string name() const override { return "rule"; }

 protected:
  Annotation do_annotate(std::string_view text, std::string_view) const override {
    Annotation a;
    for (auto& surface : split_tokens(text)) {
      Token t;
      t.pos = tag(surface, t.modal);
      t.surface = std::move(surface);
      a.tokens.push_back(std::move(t));
    }
    if (a.tokens.empty()) return a;

    a.sentence_starts.push_back(0);
    for (std::size_t i = 0; i + 1 < a.tokens.size(); ++i) {
      if (is_terminal(a.tokens[i].surface)) a.sentence_starts.push_back(i + 1);
    }
    for (std::size_t s = 0; s < a.sentence_starts.size(); ++s) {
      const std::size_t b = a.sentence_starts[s];
      const std::size_t e =
          s + 1 < a.sentence_starts.size() ? a.sentence_starts[s + 1] : a.tokens.size();
      attach_sentence(a, b, e);
    }
    for (std::size_t i = 0; i < a.tokens.size(); ++i) {
      auto it = lexicon_.entities.find(ascii_lower(a.tokens[i].surface));
      if (it == lexicon_.entities.end()) continue;
      if (auto cls = map_entity_label(it->second)) a.entities.push_back({i, i + 1, *cls});
    }
    return a;
  }

 private:
  static bool is_punct(std::string_view s) {
    return !s.empty() && std::none_of(s.begin(), s.end(), detail::is_word_byte);
  }

  static bool is_terminal(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(),
                                     [](char c) { return c == '.' || c == '!' || c == '?'; });
  }

  static bool is_numeral(std::string_view s) {
    bool digit = false;
    for (char c : s) {
      if (c >= '0' && c <= '9') {
        digit = true;
      } else if (c != ',' && c != '.' && c != '+' && c != '-') {
        return false;
      }
    }
    return digit;
  }

  static std::vector<std::string> split_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& raw : whitespace_tokens(text)) {
      std::size_t b = 0;
      std::size_t e = raw.size();
      while (b < e && !detail::is_word_byte(raw[b])) ++b;
      while (e > b && !detail::is_word_byte(raw[e - 1])) --e;
      if (b == e) {
        out.push_back(raw);
        continue;
      }
      if (b > 0) out.push_back(raw.substr(0, b));
      out.push_back(raw.substr(b, e - b));
      if (e < raw.size()) out.push_back(raw.substr(e));
    }
    return out;
  }

  std::string tag(std::string_view surface, bool& modal) const {
    if (is_punct(surface)) return "PUNCT";
    if (is_numeral(surface)) return "NUM";
    if (surface == "URL" || surface == "USER") return "X";
    const std::string lower = ascii_lower(surface);
    if (lexicon_.modals.count(lower) != 0) {
      modal = true;
      return "AUX";
    }
    if (auto it = lexicon_.pos.find(lower); it != lexicon_.pos.end()) return it->second;
    return "X";
  }

  static bool nominal(const Token& t) { return t.pos == "NOUN" || t.pos == "PROPN"; }

  static void attach_sentence(Annotation& a, std::size_t b, std::size_t e) {
    auto find_first = [&](auto pred) -> std::optional<std::size_t> {
      for (std::size_t i = b; i < e; ++i) {
        if (pred(a.tokens[i])) return i;
      }
      return std::nullopt;
    };
    auto root = find_first([](const Token& t) { return t.pos == "VERB"; });
    if (!root) root = find_first([](const Token& t) { return t.pos == "AUX"; });
    if (!root) root = find_first([](const Token& t) { return t.pos != "PUNCT"; });
    if (!root) root = b;
    const std::size_t r = *root;
    const bool verbal = a.tokens[r].pos == "VERB" || a.tokens[r].pos == "AUX";

    std::optional<std::size_t> subject;
    if (verbal) {
      for (std::size_t i = b; i < r; ++i) {
        const auto& t = a.tokens[i];
        if (nominal(t) || t.pos == "PRON") subject = i;
      }
    }
    for (std::size_t i = b; i < e; ++i) {
      const auto& t = a.tokens[i];
      if (i == r) {
        a.dependencies.push_back({-1, i, "root"});
      } else if (subject && i == *subject) {
        a.dependencies.push_back({static_cast<int>(r), i, "nsubj"});
      } else if (nominal(t) && i + 1 < e && nominal(a.tokens[i + 1])) {
        a.dependencies.push_back({static_cast<int>(i + 1), i, "compound"});
      } else if (t.modal) {
        a.dependencies.push_back({static_cast<int>(r), i, "aux"});
      } else if (t.pos == "PUNCT") {
        a.dependencies.push_back({static_cast<int>(r), i, "punct"});
      } else {
        a.dependencies.push_back({static_cast<int>(r), i, "dep"});
      }
    }
  }

  Lexicon lexicon_;
};

/// Annotator backends keyed by language code.
class AnnotatorRegistry {
 public:
  void register_backend(const std::string& lang, std::shared_ptr<const Annotator> backend) {
    backends_[lang] = std::move(backend);
  }

  bool supports(const std::string& lang) const { return backends_.count(lang) != 0; }

  const Annotator& backend_for(const std::string& lang) const {
    auto it = backends_.find(lang);
    if (it == backends_.end()) throw UnsupportedLanguageError(lang);
    return *it->second;
  }

  std::vector<std::string> languages() const {
    std::vector<std::string> out;
    for (const auto& [l, _] : backends_) out.push_back(l);
    return out;
  }

  /// Normalizes the message text and annotates it with the language's backend.
  Annotation annotate(const Message& message) const {
    const auto& backend = backend_for(message.lang);
    return backend.annotate(normalize(message.text), message.lang);
  }

 private:
  std::map<std::string, std::shared_ptr<const Annotator>> backends_;
};

// ---------------------------------------------------------------------------
// Features

inline constexpr std::size_t kNumTextFeatures = 15;

namespace feature {
inline constexpr std::size_t kNumerals = 0;
inline constexpr std::size_t kNouns = 1;
inline constexpr std::size_t kVerbs = 2;
inline constexpr std::size_t kAdverbs = 3;
inline constexpr std::size_t kAdjectives = 4;
inline constexpr std::size_t kSubjects = 5;
inline constexpr std::size_t kCompounds = 6;
inline constexpr std::size_t kRoots = 7;
inline constexpr std::size_t kModality = 8;
inline constexpr std::size_t kHasPerson = 9;
inline constexpr std::size_t kHasPlace = 10;
inline constexpr std::size_t kHasOrg = 11;
inline constexpr std::size_t kHasDate = 12;
inline constexpr std::size_t kUrls = 13;
inline constexpr std::size_t kMentions = 14;
}  // namespace feature

using RawFeatures = std::array<double, kNumTextFeatures>;
using ScaledFeatures = std::array<double, kNumTextFeatures>;

inline constexpr bool is_binary_feature(std::size_t i) {
  return i >= feature::kHasPerson && i <= feature::kHasDate;
}

inline RawFeatures extract_features(const Annotation& annotation, const Message& message) {
  RawFeatures f{};
  for (const auto& t : annotation.tokens) {
    if (t.pos == "NUM") f[feature::kNumerals] += 1;
    if (t.pos == "NOUN" || t.pos == "PROPN") f[feature::kNouns] += 1;
    if (t.pos == "VERB") f[feature::kVerbs] += 1;
    if (t.pos == "ADV") f[feature::kAdverbs] += 1;
    if (t.pos == "ADJ") f[feature::kAdjectives] += 1;
    if (t.modal) f[feature::kModality] += 1;
  }
  for (const auto& d : annotation.dependencies) {
    if (d.relation == "nsubj" || d.relation == "nsubj:pass" || d.relation == "nsubjpass") {
      f[feature::kSubjects] += 1;
    }
    if (d.relation.rfind("compound", 0) == 0) f[feature::kCompounds] += 1;
    if (d.relation == "root") f[feature::kRoots] += 1;
  }
  for (const auto& e : annotation.entities) {
    switch (e.label) {
      case EntityClass::Person: f[feature::kHasPerson] = 1; break;
      case EntityClass::Place: f[feature::kHasPlace] = 1; break;
      case EntityClass::Org: f[feature::kHasOrg] = 1; break;
      case EntityClass::Date: f[feature::kHasDate] = 1; break;
    }
  }
  f[feature::kUrls] = static_cast<double>(count_urls(message.text));
  f[feature::kMentions] = static_cast<double>(count_mentions(message.text));
  return f;
}

/// Per-index min-max scaler fitted on a training split. Binary indices pass
/// through; degenerate indices (min == max) map to 0.5; values outside the
/// training range are clamped into [0, 1].
class FeatureScaler {
 public:
  FeatureScaler() = default;
  FeatureScaler(const RawFeatures& min, const RawFeatures& max) : min_(min), max_(max) {
    for (std::size_t i = 0; i < kNumTextFeatures; ++i) {
      if (min_[i] > max_[i]) throw ValidationError("scaler: min > max at index " + std::to_string(i));
    }
  }

  static FeatureScaler fit(std::span<const RawFeatures> train) {
    if (train.empty()) throw ValidationError("fit_scaler: empty training list");
    RawFeatures lo = train.front();
    RawFeatures hi = train.front();
    for (const auto& v : train) {
      for (std::size_t i = 0; i < kNumTextFeatures; ++i) {
        lo[i] = std::min(lo[i], v[i]);
        hi[i] = std::max(hi[i], v[i]);
      }
    }
    for (std::size_t i = 0; i < kNumTextFeatures; ++i) {
      if (is_binary_feature(i)) {
        lo[i] = 0;
        hi[i] = 1;
      }
    }
    return FeatureScaler(lo, hi);
  }

  bool degenerate(std::size_t i) const { return !is_binary_feature(i) && min_[i] == max_[i]; }

  ScaledFeatures apply(const RawFeatures& raw) const {
    ScaledFeatures out{};
    for (std::size_t i = 0; i < kNumTextFeatures; ++i) {
      if (is_binary_feature(i)) {
        out[i] = raw[i];
      } else if (degenerate(i)) {
        out[i] = 0.5;
      } else {
        out[i] = std::clamp((raw[i] - min_[i]) / (max_[i] - min_[i]), 0.0, 1.0);
      }
    }
    return out;
  }

  const RawFeatures& min() const noexcept { return min_; }
  const RawFeatures& max() const noexcept { return max_; }

  nlohmann::json to_json() const { return {{"min", min_}, {"max", max_}}; }

  static FeatureScaler from_json(const nlohmann::json& j) {
    return FeatureScaler(j.at("min").get<RawFeatures>(), j.at("max").get<RawFeatures>());
  }

 private:
  RawFeatures min_{};
  RawFeatures max_{};
};

inline FeatureScaler fit_scaler(std::span<const RawFeatures> train) {
  return FeatureScaler::fit(train);
}

inline ScaledFeatures apply_scaler(const FeatureScaler& scaler, const RawFeatures& raw) {
  return scaler.apply(raw);
}

}  // namespace crisisscope
