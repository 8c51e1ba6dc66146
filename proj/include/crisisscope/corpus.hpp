#pragma once

// Message data model, JSONL ingestion and the train/test split protocols.

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisscope/error.hpp"
#include "crisisscope/text.hpp"

namespace crisisscope {

enum class CategoryId {
  Casualties,
  Damage,
  Danger,
  Government,
  Sensor,
  Service,
  Water,
  Weather,
};

inline constexpr std::array<CategoryId, 8> kAllCategories = {
    CategoryId::Casualties, CategoryId::Damage,  CategoryId::Danger, CategoryId::Government,
    CategoryId::Sensor,     CategoryId::Service, CategoryId::Water,  CategoryId::Weather,
};

inline std::string_view to_string(CategoryId c) {
  switch (c) {
    case CategoryId::Casualties: return "Casualties";
    case CategoryId::Damage: return "Damage";
    case CategoryId::Danger: return "Danger";
    case CategoryId::Government: return "Government";
    case CategoryId::Sensor: return "Sensor";
    case CategoryId::Service: return "Service";
    case CategoryId::Water: return "Water";
    case CategoryId::Weather: return "Weather";
  }
  return "?";
}

inline std::optional<CategoryId> parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

struct Message {
  std::string id;
  std::string text;
  std::string lang;
  std::string event_id;
  std::optional<bool> informative;
  std::set<CategoryId> categories;

  bool has_category(CategoryId c) const { return categories.count(c) != 0; }
};

inline bool is_language_code(std::string_view lang) {
  return lang.size() == 2 && detail::is_lower(lang[0]) && detail::is_lower(lang[1]);
}

/// Messages of one crisis event, in file order.
class EventCollection {
 public:
  EventCollection() = default;

  EventCollection(std::string event_id, std::string name, std::vector<Message> messages)
      : event_id_(std::move(event_id)), name_(std::move(name)), messages_(std::move(messages)) {
    std::unordered_set<std::string> seen;
    for (const auto& m : messages_) {
      if (m.event_id != event_id_) {
        throw IntegrityError("message '" + m.id + "' belongs to event '" + m.event_id +
                             "', not '" + event_id_ + "'");
      }
      if (!seen.insert(m.id).second) throw IntegrityError("duplicate message id '" + m.id + "'");
      languages_.insert(m.lang);
    }
  }

  const std::string& event_id() const noexcept { return event_id_; }
  const std::string& name() const noexcept { return name_; }
  const std::vector<Message>& messages() const noexcept { return messages_; }
  const std::set<std::string>& languages() const noexcept { return languages_; }
  std::size_t size() const noexcept { return messages_.size(); }

 private:
  std::string event_id_;
  std::string name_;
  std::vector<Message> messages_;
  std::set<std::string> languages_;
};

struct ReferenceReport {
  std::string event_id;
  std::string text;
};

struct SplitPair {
  std::vector<Message> train;
  std::vector<Message> test;
  std::string description;
};

// ---------------------------------------------------------------------------
// JSONL records

inline Message message_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record is not a JSON object");
  auto required = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw SchemaError(std::string("missing or non-string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  Message m;
  m.id = required("id");
  m.text = required("text");
  m.lang = required("lang");
  m.event_id = required("event_id");
  if (m.id.empty()) throw SchemaError("empty 'id'");
  if (m.text.empty()) throw SchemaError("empty 'text'");
  if (!is_language_code(m.lang)) {
    throw SchemaError("'lang' must be a two-letter lowercase code, got '" + m.lang + "'");
  }
  if (auto it = j.find("informative"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw SchemaError("'informative' must be a boolean");
    m.informative = it->get<bool>();
  }
  if (auto it = j.find("categories"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("'categories' must be an array");
    for (const auto& c : *it) {
      if (!c.is_string()) throw SchemaError("category names must be strings");
      auto cat = parse_category(c.get<std::string>());
      if (!cat) throw SchemaError("unknown category '" + c.get<std::string>() + "'");
      m.categories.insert(*cat);
    }
  }
  return m;
}

/// Canonical record: fixed key order, categories in enumeration order,
/// optional fields omitted when absent.
inline nlohmann::ordered_json message_to_json(const Message& m) {
  nlohmann::ordered_json j;
  j["id"] = m.id;
  j["text"] = m.text;
  j["lang"] = m.lang;
  j["event_id"] = m.event_id;
  if (m.informative) j["informative"] = *m.informative;
  if (!m.categories.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (auto c : m.categories) arr.push_back(std::string(to_string(c)));
    j["categories"] = std::move(arr);
  }
  return j;
}

/// Parse JSONL records. Blank lines are skipped. Duplicate ids are rejected.
inline std::vector<Message> read_messages(std::istream& in) {
  std::vector<Message> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    Message m;
    try {
      m = message_from_json(j);
    } catch (const SchemaError& e) {
      throw ParseError(lineno, e.what());
    }
    if (!seen.insert(m.id).second) {
      throw IntegrityError("line " + std::to_string(lineno) + ": duplicate message id '" + m.id +
                           "'");
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline void write_messages(std::ostream& out, const std::vector<Message>& messages) {
  for (const auto& m : messages) out << message_to_json(m).dump() << '\n';
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

inline std::string read_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Group messages by event, keeping first-appearance order for both events and messages.
inline std::vector<EventCollection> group_by_event(std::vector<Message> messages) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<Message>> groups;
  for (auto& m : messages) {
    auto [it, inserted] = groups.try_emplace(m.event_id);
    if (inserted) order.push_back(m.event_id);
    it->second.push_back(std::move(m));
  }
  std::vector<EventCollection> out;
  out.reserve(order.size());
  for (const auto& id : order) out.emplace_back(id, id, std::move(groups[id]));
  return out;
}

/// Load a single-event JSONL file. An empty file yields an empty collection.
inline EventCollection load_messages(const std::filesystem::path& path) {
  auto in = open_input(path);
  auto messages = read_messages(in);
  if (messages.empty()) return {};
  const std::string event = messages.front().event_id;
  return EventCollection(event, event, std::move(messages));
}

/// Load a JSONL file that may hold several events.
inline std::vector<EventCollection> load_events(const std::filesystem::path& path) {
  auto in = open_input(path);
  return group_by_event(read_messages(in));
}

/// Reads `<dir>/<event_id>.report.txt`.
inline ReferenceReport load_report(const std::filesystem::path& dir, const std::string& event_id) {
  ReferenceReport r{event_id, read_file(dir / (event_id + ".report.txt"))};
  if (trim(r.text).empty()) throw ValidationError("reference report for '" + event_id + "' is empty");
  return r;
}

// ---------------------------------------------------------------------------
// Splits

inline SplitPair split_leave_one_language_out(const EventCollection& collection,
                                              const std::string& held_out) {
  const auto& langs = collection.languages();
  if (langs.size() < 2) {
    throw ValidationError("leave-one-language-out needs at least two languages in event '" +
                          collection.event_id() + "'");
  }
  if (langs.count(held_out) == 0) {
    std::string avail;
    for (const auto& l : langs) avail += (avail.empty() ? "" : ", ") + l;
    throw ValidationError("language '" + held_out + "' not present in event '" +
                          collection.event_id() + "' (available: " + avail + ")");
  }
  SplitPair split;
  split.description = collection.event_id() + "/" + held_out;
  for (const auto& m : collection.messages()) {
    (m.lang == held_out ? split.test : split.train).push_back(m);
  }
  return split;
}

inline SplitPair split_leave_one_event_out(const std::vector<EventCollection>& collections,
                                           const std::string& held_out) {
  if (collections.size() < 2) {
    throw ValidationError("leave-one-event-out needs at least two events");
  }
  const bool known = std::any_of(collections.begin(), collections.end(),
                                 [&](const auto& c) { return c.event_id() == held_out; });
  if (!known) throw NotFoundError("unknown event '" + held_out + "'");
  SplitPair split;
  split.description = held_out;
  for (const auto& c : collections) {
    auto& dst = c.event_id() == held_out ? split.test : split.train;
    dst.insert(dst.end(), c.messages().begin(), c.messages().end());
  }
  return split;
}

inline const EventCollection& find_event(const std::vector<EventCollection>& collections,
                                         const std::string& event_id) {
  for (const auto& c : collections) {
    if (c.event_id() == event_id) return c;
  }
  throw NotFoundError("unknown event '" + event_id + "'");
}

}  // namespace crisisscope
