#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace densehar {

enum class ErrorKind {
  kDimensionMismatch,
  kInvalidArgument,
  kLabelOutOfRange,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kFormat,
  kParse,
  kIo,
  kConfig,
  kNumeric,
  kNoData,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` lets callers
// (the CLI in particular) map failures onto stable exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace densehar
