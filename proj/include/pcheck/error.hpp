#ifndef PCHECK_ERROR_HPP
#define PCHECK_ERROR_HPP

#include <cstddef>
#include <exception>
#include <stdexcept>
#include <string>

namespace pcheck {

/// Base of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data does not satisfy a schema or an invariant. CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A line of a JSONL corpus failed to parse.
class CorpusParseError : public ValidationError {
 public:
  CorpusParseError(std::string file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": parse error: " +
                        what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class SchemaError : public ValidationError {
 public:
  SchemaError(std::string field, const std::string& reason)
      : ValidationError("schema violation in '" + field + "': " + reason),
        field_(std::move(field)),
        reason_(reason) {}

  const std::string& field() const { return field_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

/// A target preference instance duplicates an item of its user's history.
class HistoryLeakError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An evaluation pair references a user from the training split.
class SplitLeakError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Model call failed. CLI exit code 3.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class RateLimitError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class MalformedResponseError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// The judge kept producing output that does not match the checklist.
class JudgeOutputError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Model output could not be turned into a checklist.
class ChecklistParseError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// A rejection-sampling gate never accepted within the attempt budget.
class GateExhausted : public Error {
 public:
  using Error::Error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const ProviderError*>(&e) != nullptr) return 3;
  return 1;
}

}  // namespace pcheck

#endif  // PCHECK_ERROR_HPP
