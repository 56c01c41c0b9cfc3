#include "ulrn/errors.hpp"

namespace ulrn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kVocabulary: return "vocabulary error";
    case ErrorKind::kLength: return "length error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kCapacity: return "capacity error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kTruncated: return "truncated file";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kIntegrity: return "integrity error";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + ": " + message);
}

}  // namespace ulrn
