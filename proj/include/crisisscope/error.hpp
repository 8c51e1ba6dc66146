#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crisisscope {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied something that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A structured input (JSON object, config file) is missing fields or has the wrong types.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A line-oriented input could not be parsed.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Collection-level invariant broken (e.g. duplicate message ids).
class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedLanguageError : public ValidationError {
 public:
  explicit UnsupportedLanguageError(const std::string& lang)
      : ValidationError("no annotator backend registered for language '" + lang + "'"),
        lang_(lang) {}

  const std::string& lang() const noexcept { return lang_; }

 private:
  std::string lang_;
};

/// A pluggable model backend (encoder, generator, annotator) failed or is unreachable.
class BackendError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit BackendError(const std::string& what, std::size_t input_index = npos)
      : Error(input_index == npos ? what
                                  : what + " (input " + std::to_string(input_index) + ")"),
        index_(input_index) {}

  std::size_t input_index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace crisisscope
