#pragma once

// Text utilities shared across modules: message normalization, whitespace
// tokens, sentence splitting and raw-marker counting.

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "crisisscope/error.hpp"

namespace crisisscope {

namespace detail {

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences; treat them as word
// characters so non-ASCII words are never split mid-codepoint.
inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) || c == '_';
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

inline bool starts_with_at(std::string_view s, std::size_t i, std::string_view prefix) {
  return s.substr(i, prefix.size()) == prefix;
}

inline bool url_starts_at(std::string_view s, std::size_t i) {
  if (starts_with_at(s, i, "http://") || starts_with_at(s, i, "https://")) {
    return true;
  }
  if (starts_with_at(s, i, "t.co/")) {
    return i == 0 || (!is_word_byte(s[i - 1]) && s[i - 1] != '.');
  }
  return false;
}

inline std::size_t skip_non_space(std::string_view s, std::size_t i) {
  while (i < s.size() && !is_space(s[i])) ++i;
  return i;
}

inline std::size_t skip_word(std::string_view s, std::size_t i) {
  while (i < s.size() && is_word_byte(s[i])) ++i;
  return i;
}

// Split hashtag body on '_' and on lower->upper transitions.
inline std::string split_hashtag(std::string_view body) {
  std::vector<std::string> words;
  std::string cur;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '_') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    if (is_upper(c) && i > 0 && is_lower(body[i - 1]) && !cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
    cur.push_back(c);
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  if (words.empty()) return std::string(body);
  std::string out = words.front();
  for (std::size_t i = 1; i < words.size(); ++i) {
    out += ' ';
    out += words[i];
  }
  return out;
}

inline std::string normalize_pass(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool boundary = i == 0 || !is_word_byte(s[i - 1]);
    if (url_starts_at(s, i)) {
      out += "URL";
      i = skip_non_space(s, i);
      continue;
    }
    if ((c == '@' || c == '#') && boundary) {
      std::size_t j = i;
      while (j < s.size() && s[j] == c) ++j;
      const std::size_t end = skip_word(s, j);
      if (end > j) {
        out += c == '@' ? std::string("USER") : split_hashtag(s.substr(j, end - j));
        i = end;
        continue;
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

}  // namespace detail

/// Replace URLs with `URL`, mentions with `USER`, and hashtags with their
/// words. Punctuation and stopwords are left untouched. Idempotent.
inline std::string normalize(std::string_view text) {
  if (text.empty()) throw ValidationError("normalize: text must be non-empty");
  std::string cur = detail::normalize_pass(text);
  // A pass can expose a new marker (e.g. "#t.co/x" -> "t.co/x"); iterate to
  // the fixpoint. Each productive pass strictly shortens or removes markers.
  for (int iter = 0; iter < 16; ++iter) {
    std::string next = detail::normalize_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

/// Number of URLs in raw (pre-normalization) text.
inline std::size_t count_urls(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (detail::url_starts_at(text, i)) {
      ++n;
      i = detail::skip_non_space(text, i);
    } else {
      ++i;
    }
  }
  return n;
}

/// Number of `@name` mentions in raw text.
inline std::size_t count_mentions(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (detail::url_starts_at(text, i)) {
      i = detail::skip_non_space(text, i);
      continue;
    }
    if (text[i] == '@' && (i == 0 || !detail::is_word_byte(text[i - 1]))) {
      std::size_t j = i;
      while (j < text.size() && text[j] == '@') ++j;
      const std::size_t end = detail::skip_word(text, j);
      if (end > j) {
        ++n;
        i = end;
        continue;
      }
    }
    ++i;
  }
  return n;
}

/// Whitespace-delimited tokens. This is the token unit for generation budgets.
inline std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !detail::is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::size_t count_tokens(std::string_view text) { return whitespace_tokens(text).size(); }

/// Maximal runs of word bytes (letters, digits, '_' and non-ASCII); punctuation dropped.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !detail::is_word_byte(text[i])) ++i;
    const std::size_t start = i;
    i = detail::skip_word(text, i);
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && detail::is_space(s[b])) ++b;
  while (e > b && detail::is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Lower-case and collapse whitespace runs to single spaces.
inline std::string fold_whitespace_lower(std::string_view s) {
  std::string out;
  for (const auto& tok : whitespace_tokens(s)) {
    if (!out.empty()) out += ' ';
    out += ascii_lower(tok);
  }
  return out;
}

/// Split on terminal punctuation (. ! ?) followed by whitespace or end of
/// text. Empty and punctuation-only pieces are dropped; if nothing
/// survives the trimmed text is returned as a single sentence.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  auto flush = [&](std::size_t b, std::size_t e) {
    std::string piece = trim(text.substr(b, e - b));
    if (!word_tokens(piece).empty()) out.push_back(std::move(piece));
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
      if (j == text.size() || detail::is_space(text[j])) {
        flush(start, j);
        start = j;
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (start < text.size()) flush(start, text.size());
  if (out.empty()) {
    std::string whole = trim(text);
    if (!whole.empty()) out.push_back(std::move(whole));
  }
  return out;
}

}  // namespace crisisscope
