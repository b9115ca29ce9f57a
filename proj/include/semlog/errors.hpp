#pragma once

#include <stdexcept>
#include <string>

namespace semlog {

// Broad failure categories; the CLI maps each to an exit code.
enum class ErrorKind {
  kConfig,
  kIo,
  kProvider,
  kData,
  kContract,
  kNotFound,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

// Transport or remote-service failure. `retryable` is false for failures
// that another attempt cannot fix (bad credentials, dimension mismatch).
struct ProviderError : Error {
  ProviderError(const std::string& what, bool retryable)
      : Error(ErrorKind::kProvider, what), retryable(retryable) {}
  bool retryable;
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& what) : Error(ErrorKind::kContract, what) {}
};

struct NotFound : Error {
  explicit NotFound(const std::string& what) : Error(ErrorKind::kNotFound, what) {}
};

// Encoder output too close to the zero vector to normalize.
struct DegenerateEmbedding : Error {
  explicit DegenerateEmbedding(const std::string& what) : Error(ErrorKind::kData, what) {}
};

// Completion response without a usable LogTemplate segment.
struct MalformedResponse : Error {
  explicit MalformedResponse(const std::string& what) : Error(ErrorKind::kData, what) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kIo: return 3;
    case ErrorKind::kProvider: return 4;
    case ErrorKind::kData:
    case ErrorKind::kContract:
    case ErrorKind::kNotFound: return 5;
  }
  return 1;
}

}  // namespace semlog
