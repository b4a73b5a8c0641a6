#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lungseg {

enum class ErrorCode {
  MissingKey,
  DimMismatch,
  UnsupportedType,
  IoError,
  UnmappedLabel,
  OutOfWindow,
  OutOfRange,
  GeometryMismatch,
  InvalidConfig,
  ShapeMismatch,
  BadMagic,
  NameMismatch,
  InvalidK,
  EmptyDataset,
  BothEmpty,
  NoIncludedSlices,
  MissingPair,
  BadWeights,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can print a machine-parsable `error: <Code>: <message>` line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace lungseg
