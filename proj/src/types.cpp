#include "tierlab/types.hpp"

namespace tierlab {

std::string_view to_string(Tier t) { return t == Tier::Fast ? "fast" : "slow"; }

std::string_view to_string(AccessKind k) { return k == AccessKind::Read ? "R" : "W"; }

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownPage: return "UnknownPage";
    case ErrorCode::NotMapped: return "NotMapped";
    case ErrorCode::FrameUnallocated: return "FrameUnallocated";
    case ErrorCode::InvariantBreach: return "InvariantBreach";
    case ErrorCode::OutOfMemory: return "OutOfMemory";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

void raise(ErrorCode code, const std::string& what) {
  throw SimError(code, std::string(to_string(code)) + ": " + what);
}

}  // namespace tierlab
