#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ulrn {

// Every failure the library reports carries one of these kinds. The CLI maps
// kinds onto process exit codes, so new kinds must also be added there.
enum class ErrorKind {
  kShape,       // tensor or checkpoint shape disagreement
  kContract,    // violated precondition (non-scalar loss, too few samples, ...)
  kState,       // object used in the wrong lifecycle state
  kIndex,       // position or target out of range
  kVocabulary,  // token id outside the vocabulary
  kLength,      // sequence longer than the model context
  kConfig,      // invalid configuration value or unknown key
  kCapacity,    // not enough input to satisfy a request
  kFormat,      // malformed file contents
  kTruncated,   // file ends before its declared contents
  kData,        // data-contract violation (wrong source tag, missing markers)
  kDivergence,  // training loss blew up
  kIo,          // filesystem failure
  kIntegrity,   // checksum mismatch on data that must not change
};

std::string_view to_string(ErrorKind kind);

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

}  // namespace ulrn
