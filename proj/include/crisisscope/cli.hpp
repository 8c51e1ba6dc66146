#pragma once

// Command-line front end. `cli_run` returns the process exit code:
// 0 success, 1 validation / usage error, 2 backend or I/O error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crisisscope/config.hpp"
#include "crisisscope/corpus.hpp"
#include "crisisscope/evaluate.hpp"
#include "crisisscope/models.hpp"
#include "crisisscope/service.hpp"
#include "crisisscope/session.hpp"
#include "crisisscope/summarize.hpp"

namespace crisisscope {

namespace cli_detail {

struct Common {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

inline void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Pipeline config file (JSON)");
  cmd->add_option("--seed", c.seed, "Seed for every stochastic step");
  cmd->add_option("--out", c.out, "Output file (default: stdout)");
}

inline PipelineConfig load(const Common& c) {
  auto cfg = resolve_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.summary.seed = *c.seed;
  }
  return cfg;
}

inline void emit(const Common& c, const std::string& content, std::ostream& out) {
  if (c.out) {
    write_file(*c.out, content);
  } else {
    out << content;
  }
}

/// Path to a query file, or the id of a query in the configured directory.
inline Query resolve_query(const std::string& ref, const PipelineConfig& cfg) {
  if (std::filesystem::exists(ref)) return parse_query(ref);
  if (cfg.queries) {
    const auto p = *cfg.queries / (ref + ".json");
    if (std::filesystem::exists(p)) return parse_query(p);
  }
  throw NotFoundError("query '" + ref + "' is neither a file nor a configured query id");
}

inline std::vector<Message> input_messages(const std::optional<std::filesystem::path>& input, const PipelineConfig& cfg) {
  const auto path = input ? input : cfg.messages;
  if (!path) throw ValidationError("no input messages: pass --input or set data.messages in the config");
  auto in = open_input(*path);
  return read_messages(in);
}

inline std::set<std::string> languages_of(const std::vector<Message>& ms) {
  std::set<std::string> out;
  for (const auto& m : ms) out.insert(m.lang);
  return out;
}

inline std::filesystem::path json_mirror(const std::filesystem::path& csv) {
  auto p = csv;
  return p.replace_extension(".json");
}

inline std::string read_summary_text(const std::filesystem::path& path) {
  const auto content = read_file(path);
  if (path.extension() == ".json") {
    try {
      return summary_from_json(nlohmann::json::parse(content)).full_text;
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("summary file '" + path.string() + "': " + e.what());
    }
  }
  return content;
}

}  // namespace cli_detail

inline int cli_run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"crisisscope: cross-lingual crisis message classification, retrieval and summarization"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  std::optional<std::filesystem::path> input, model_path, ranker_path, save_ranker, claims_path, summary_path,
      reference_path;
  std::string query_ref, event_id, mode = "regular", protocol, target, host = "127.0.0.1";
  std::optional<std::size_t> k, budget;
  int port = 8080;

  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL corpus and write it in canonical form");
  add_common(ingest, common);
  ingest->add_option("--input", input, "Messages (JSONL)")->required();

  auto* train = app.add_subcommand("train-classifier", "Train the informative-message classifier");
  add_common(train, common);
  train->add_option("--input", input, "Labeled messages (JSONL); default: data.messages");

  auto* classify = app.add_subcommand("classify", "Score messages with a trained classifier");
  add_common(classify, common);
  classify->add_option("--model", model_path, "Classifier checkpoint")->required();
  classify->add_option("--input", input, "Messages (JSONL); default: data.messages");

  auto* rank_cmd = app.add_subcommand("rank", "Rank an event's messages for a query");
  auto* summarize_cmd = app.add_subcommand("summarize", "Summarize the top-ranked messages for a query");
  for (auto* cmd : {rank_cmd, summarize_cmd}) {
    add_common(cmd, common);
    cmd->add_option("--query", query_ref, "Query file or configured query id")->required();
    cmd->add_option("--event", event_id, "Event id")->required();
    cmd->add_option("--k", k, "Number of candidates");
    cmd->add_option("--ranker", ranker_path, "Ranker checkpoint (default: train one)");
    cmd->add_option("--save-ranker", save_ranker, "Write the ranker checkpoint here");
  }
  summarize_cmd->add_option("--mode", mode, "regular | diversified")->check(CLI::IsMember({"regular", "diversified"}));
  summarize_cmd->add_option("--budget", budget, "Output budget in tokens");

  auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation protocol");
  add_common(evaluate, common);
  evaluate->add_option("--protocol", protocol, "lolo | loeo | claims | report")
      ->required()
      ->check(CLI::IsMember({"lolo", "loeo", "claims", "report"}));
  evaluate->add_option("--input", input, "Labeled messages for lolo/loeo; default: data.messages");
  evaluate->add_option("--claims", claims_path, "Claim annotations {summary_id: [claims]} (claims)");
  evaluate->add_option("--target", target, "Summary id to score (claims; default: all)");
  evaluate->add_option("--summary", summary_path, "Summary JSON or text (report)");
  evaluate->add_option("--event", event_id, "Event whose reference report is used (report)");
  evaluate->add_option("--reference", reference_path, "Reference report text (report)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP JSON service");
  add_common(serve, common);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (ingest->parsed()) {
      auto in = open_input(*input);
      const auto messages = read_messages(in);
      std::ostringstream canonical;
      write_messages(canonical, messages);
      emit(common, canonical.str(), out);
      for (const auto& e : group_by_event(messages)) {
        err << e.event_id() << ": " << e.size() << " messages";
        for (const auto& l : e.languages()) err << ' ' << l;
        err << '\n';
      }
      return 0;
    }

    const auto cfg = load(common);

    if (train->parsed()) {
      const auto messages = input_messages(input, cfg);
      const auto encoder = make_encoder(cfg.encoder);
      const auto annotators = make_annotators(cfg.annotator, languages_of(messages));
      const FeatureContext ctx{*encoder, annotators};
      const auto clf = fit_classifier(messages, ctx, cfg.model, cfg.seed);
      emit(common, checkpoint_to_json(clf).dump() + "\n", out);
      return 0;
    }

    if (classify->parsed()) {
      const auto messages = input_messages(input, cfg);
      const auto encoder = make_encoder(cfg.encoder);
      const auto annotators = make_annotators(cfg.annotator, languages_of(messages));
      const FeatureContext ctx{*encoder, annotators};
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(*model_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("checkpoint '" + model_path->string() + "': " + e.what());
      }
      const auto clf = checkpoint_from_json(j, *encoder);
      std::ostringstream lines;
      for (const auto& m : messages) {
        const double p = predict_informative(clf, m, ctx);
        nlohmann::ordered_json row;
        row["id"] = m.id;
        row["p_informative"] = p;
        row["informative"] = decide(p) == 1;
        lines << row.dump() << '\n';
      }
      emit(common, lines.str(), out);
      return 0;
    }

    if (rank_cmd->parsed() || summarize_cmd->parsed()) {
      Session session(cfg);
      const auto query = resolve_query(query_ref, cfg);
      session.event(event_id);
      if (ranker_path) {
        try {
          session.set_ranker(query, event_id,
                             checkpoint_from_json(nlohmann::json::parse(read_file(*ranker_path)), session.encoder()));
        } catch (const nlohmann::json::parse_error& e) {
          throw SchemaError("checkpoint '" + ranker_path->string() + "': " + e.what());
        }
      }
      if (save_ranker) write_file(*save_ranker, checkpoint_to_json(*session.ranker(query, event_id)).dump() + "\n");
      const std::size_t top = k.value_or(cfg.k);
      if (top == 0) throw ValidationError("--k must be at least 1");
      nlohmann::ordered_json j;
      if (rank_cmd->parsed()) {
        const auto result = session.rank(query, event_id, top);
        j["event_id"] = event_id;
        j["category"] = std::string(to_string(query.category));
        j["k"] = top;
        j["candidates"] = nlohmann::ordered_json::array();
        for (const auto& c : result.candidates) j["candidates"].push_back(ranked_candidate_to_json(c));
        j["considered"] = result.considered;
        j["exact_duplicates_removed"] = result.exact_duplicates_removed;
        j["near_duplicates_removed"] = result.near_duplicates_removed;
      } else {
        j = summary_to_json(
            session.summarize(query, event_id, parse_summary_mode(mode), budget.value_or(cfg.summary.budget), top));
        j["event_id"] = event_id;
      }
      j["seed"] = cfg.seed;
      j["backends"] = session.backends_json();
      emit(common, j.dump(2) + "\n", out);
      return 0;
    }

    if (evaluate->parsed()) {
      const auto encoder = make_encoder(cfg.encoder);
      if (protocol == "lolo" || protocol == "loeo") {
        const auto messages = input_messages(input, cfg);
        const auto annotators = make_annotators(cfg.annotator, languages_of(messages));
        const FeatureContext ctx{*encoder, annotators};
        const auto events = group_by_event(messages);
        const auto scorer = classifier_fold_scorer(ctx, cfg.model, cfg.seed);
        const auto folds = protocol == "lolo" ? run_lolo(events, scorer) : run_loeo(events, scorer);
        nlohmann::json backends = {{"encoder", encoder->identity()}, {"annotators", annotators.languages()}};
        const auto mirror = folds_to_json(folds, protocol, cfg.seed, backends).dump(2) + "\n";
        emit(common, folds_to_csv(folds), out);
        if (common.out) write_file(json_mirror(*common.out), mirror);
        for (const auto& f : folds) {
          if (!f.error.empty()) err << "fold " << f.event << (f.language.empty() ? "" : "/" + f.language) << ": " << f.error << '\n';
        }
        return 0;
      }
      if (protocol == "claims") {
        if (!claims_path) throw ValidationError("evaluate --protocol claims needs --claims");
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(read_file(*claims_path));
        } catch (const nlohmann::json::parse_error& e) {
          throw SchemaError("claims file: " + std::string(e.what()));
        }
        const auto sets = claim_sets_from_json(j);
        std::ostringstream csv;
        csv << "summary_id,claims,recall\n";
        bool found = target.empty();
        for (const auto& s : sets) {
          if (!target.empty() && s.summary_id != target) continue;
          found = true;
          csv << s.summary_id << ',' << s.claims.size() << ',' << claim_recall(s, sets) << '\n';
        }
        if (!found) throw NotFoundError("summary id '" + target + "' not in the claims file");
        emit(common, csv.str(), out);
        return 0;
      }
      // report
      if (!summary_path) throw ValidationError("evaluate --protocol report needs --summary");
      std::string reference;
      if (reference_path) {
        reference = read_file(*reference_path);
      } else {
        if (!cfg.reports || event_id.empty()) {
          throw ValidationError("evaluate --protocol report needs --reference, or --event with data.reports");
        }
        reference = load_report(*cfg.reports, event_id).text;
      }
      const WordTokenEncoder tokens(*encoder);
      const auto r = report_similarity(read_summary_text(*summary_path), reference, tokens);
      nlohmann::ordered_json j;
      j["precision"] = r.precision;
      j["recall"] = r.recall;
      j["f1"] = r.f1;
      j["seed"] = cfg.seed;
      j["backends"] = {{"encoder", encoder->identity()}};
      emit(common, j.dump(2) + "\n", out);
      return 0;
    }

    if (serve->parsed()) {
      auto session = std::make_shared<Session>(cfg);
      Service service(session);
      const int bound = service.bind(host, port);
      out << "listening on http://" << host << ':' << bound << std::endl;
      service.listen();
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

inline int cli_run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_run(std::move(args));
}

}  // namespace crisisscope
