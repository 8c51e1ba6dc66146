#pragma once

// Pipeline configuration file and backend construction.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/corpus.hpp"
#include "crisisscope/encoder.hpp"
#include "crisisscope/error.hpp"
#include "crisisscope/http_backends.hpp"
#include "crisisscope/linguistic.hpp"
#include "crisisscope/models.hpp"
#include "crisisscope/summarize.hpp"

namespace crisisscope {

inline constexpr const char* kConfigEnvVar = "CRISIS_SCOPE_CONFIG";
inline constexpr const char* kDefaultConfigFile = "crisisscope.json";

struct EncoderSettings {
  std::string type = "mock";  // mock | http
  std::size_t dimension = kDefaultEmbeddingDim;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> aliases;  // mock only
  std::string url;                               // http only
  std::string model;
  double timeout_s = 30;
};

struct GeneratorSettings {
  std::string type = "lead";  // lead | http
  std::size_t max_input_tokens = 4096;
  std::string url;
  std::string model;
  double timeout_s = 60;
};

struct AnnotatorSettings {
  std::vector<std::string> languages;  // empty: every language in the loaded data, plus en
  std::optional<std::filesystem::path> lexicon;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> messages;  // JSONL, one or more events
  std::optional<std::filesystem::path> train;     // labeled training messages for rankers
  std::optional<std::filesystem::path> queries;   // directory of query files
  std::optional<std::filesystem::path> reports;   // directory of <event>.report.txt
  EncoderSettings encoder;
  GeneratorSettings generator;
  AnnotatorSettings annotator;
  ModelConfig model;
  SummaryConfig summary;
  std::size_t k = 100;
  double request_timeout_s = 120;

  /// Throws NotFoundError for referenced paths that do not exist.
  void check_paths() const {
    auto check = [](const std::optional<std::filesystem::path>& p, const char* what) {
      if (p && !std::filesystem::exists(*p)) {
        throw NotFoundError(std::string("config: ") + what + " path '" + p->string() + "' does not exist");
      }
    };
    check(messages, "data.messages");
    check(train, "data.train");
    check(queries, "data.queries");
    check(reports, "data.reports");
    check(encoder.aliases, "encoder.aliases");
    check(annotator.lexicon, "annotator.lexicon");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw SchemaError(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace detail

/// Relative paths are resolved against `base_dir`.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  detail::reject_unknown(j, {"seed", "data", "encoder", "generator", "annotator", "model", "summary", "k",
                             "request_timeout_s"},
                         "config");
  auto path = [&](const nlohmann::json& obj, const char* key) -> std::optional<std::filesystem::path> {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    std::filesystem::path p = obj[key].get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  PipelineConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.k = j.value("k", c.k);
    c.request_timeout_s = j.value("request_timeout_s", c.request_timeout_s);
    if (j.contains("data")) {
      const auto& d = j["data"];
      detail::reject_unknown(d, {"messages", "train", "queries", "reports"}, "config.data");
      c.messages = path(d, "messages");
      c.train = path(d, "train");
      c.queries = path(d, "queries");
      c.reports = path(d, "reports");
    }
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      detail::reject_unknown(e, {"type", "dimension", "seed", "aliases", "url", "model", "timeout_s"}, "config.encoder");
      c.encoder.type = e.value("type", c.encoder.type);
      c.encoder.dimension = e.value("dimension", c.encoder.dimension);
      c.encoder.seed = e.value("seed", c.encoder.seed);
      c.encoder.aliases = path(e, "aliases");
      c.encoder.url = e.value("url", c.encoder.url);
      c.encoder.model = e.value("model", c.encoder.model);
      c.encoder.timeout_s = e.value("timeout_s", c.encoder.timeout_s);
    }
    if (j.contains("generator")) {
      const auto& g = j["generator"];
      detail::reject_unknown(g, {"type", "max_input_tokens", "url", "model", "timeout_s"}, "config.generator");
      c.generator.type = g.value("type", c.generator.type);
      c.generator.max_input_tokens = g.value("max_input_tokens", c.generator.max_input_tokens);
      c.generator.url = g.value("url", c.generator.url);
      c.generator.model = g.value("model", c.generator.model);
      c.generator.timeout_s = g.value("timeout_s", c.generator.timeout_s);
    }
    if (j.contains("annotator")) {
      const auto& a = j["annotator"];
      detail::reject_unknown(a, {"languages", "lexicon"}, "config.annotator");
      c.annotator.languages = a.value("languages", c.annotator.languages);
      c.annotator.lexicon = path(a, "lexicon");
    }
    if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
    if (j.contains("summary")) c.summary = SummaryConfig::from_json(j["summary"]);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  if (c.encoder.type != "mock" && c.encoder.type != "http") {
    throw SchemaError("config.encoder.type must be mock or http");
  }
  if (c.generator.type != "lead" && c.generator.type != "http") {
    throw SchemaError("config.generator.type must be lead or http");
  }
  if (c.encoder.type == "http" && c.encoder.url.empty()) throw SchemaError("config.encoder.url is required for http");
  if (c.generator.type == "http" && c.generator.url.empty()) {
    throw SchemaError("config.generator.url is required for http");
  }
  if (c.k == 0) throw ValidationError("config: k must be at least 1");
  c.model.validate();
  c.summary.validate();
  c.check_paths();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

/// Explicit path, else $CRISIS_SCOPE_CONFIG, else ./crisisscope.json if present, else defaults.
inline PipelineConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return load_config(*explicit_path);
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') return load_config(env);
  if (std::filesystem::exists(kDefaultConfigFile)) return load_config(kDefaultConfigFile);
  return PipelineConfig{};
}

inline std::shared_ptr<const EncoderBackend> make_encoder(const EncoderSettings& s) {
  const auto timeout = std::chrono::milliseconds(static_cast<long>(s.timeout_s * 1000));
  if (s.type == "http") return std::make_shared<HttpEncoder>(s.url, s.dimension, s.model, timeout);
  AliasTable aliases;
  if (s.aliases) {
    try {
      aliases = alias_table_from_json(nlohmann::json::parse(read_file(*s.aliases)));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("alias table '" + s.aliases->string() + "': " + e.what());
    }
  }
  return std::make_shared<MockEncoder>(s.dimension, s.seed, std::move(aliases));
}

inline std::shared_ptr<const GenerationBackend> make_generator(const GeneratorSettings& s) {
  if (s.type == "http") {
    return std::make_shared<HttpGenerator>(s.url, s.max_input_tokens, s.model,
                                           std::chrono::milliseconds(static_cast<long>(s.timeout_s * 1000)));
  }
  return std::make_shared<LeadGenerator>(s.max_input_tokens);
}

inline AnnotatorRegistry make_annotators(const AnnotatorSettings& s, const std::set<std::string>& data_languages) {
  Lexicon lexicon = Lexicon::english_default();
  if (s.lexicon) {
    try {
      lexicon.merge_json(nlohmann::json::parse(read_file(*s.lexicon)));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("lexicon '" + s.lexicon->string() + "': " + e.what());
    }
  }
  auto rule = std::make_shared<RuleAnnotator>(std::move(lexicon));
  AnnotatorRegistry reg;
  std::set<std::string> langs(s.languages.begin(), s.languages.end());
  if (langs.empty()) {
    langs = data_languages;
    langs.insert("en");
  }
  for (const auto& l : langs) reg.register_backend(l, rule);
  return reg;
}

}  // namespace crisisscope
