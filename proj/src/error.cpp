#include "lrc/error.hpp"

namespace lrc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kSizeMismatch: return "size mismatch";
    case ErrorCode::kTruncated: return "truncated data";
    case ErrorCode::kCorrupt: return "corrupt data";
    case ErrorCode::kHashMismatch: return "model hash mismatch";
    case ErrorCode::kLambdaOutOfRange: return "lambda out of range";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNumeric: return "numeric failure";
    case ErrorCode::kStaleTape: return "stale tape";
    case ErrorCode::kUnsupported: return "unsupported";
  }
  return "unknown";
}

}  // namespace lrc
