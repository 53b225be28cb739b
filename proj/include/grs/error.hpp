#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grs {

enum class ErrorCode {
  kFileNotFound,
  kParse,
  kDuplicateDocId,
  kEmptyCatalog,
  kIndexOutOfRange,
  kInvalidArgument,
  kMissingPlaceholder,
  kTimeout,
  kTransport,
  kProtocol,
  kEmptyResponse,
  kPortInUse,
  kScript,
  kUndefinedMetric,
  kConfig,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kDuplicateDocId: return "DuplicateDocId";
    case ErrorCode::kEmptyCatalog: return "EmptyCatalog";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kTransport: return "TransportError";
    case ErrorCode::kProtocol: return "ProtocolError";
    case ErrorCode::kEmptyResponse: return "EmptyResponse";
    case ErrorCode::kPortInUse: return "PortInUse";
    case ErrorCode::kScript: return "ScriptError";
    case ErrorCode::kUndefinedMetric: return "UndefinedMetric";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library. `code()` identifies the failure
/// class; `subject()` carries the offending value (a DocID, a placeholder
/// name, a path) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string subject = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        subject_(std::move(subject)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

  /// Gateway failures are the ones a pipeline stage may absorb and count.
  bool is_gateway_failure() const noexcept {
    return code_ == ErrorCode::kTimeout || code_ == ErrorCode::kTransport ||
           code_ == ErrorCode::kProtocol || code_ == ErrorCode::kEmptyResponse;
  }

 private:
  ErrorCode code_;
  std::string subject_;
};

}  // namespace grs
