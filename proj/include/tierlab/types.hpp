#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tierlab {

using PageId = std::uint32_t;
using CoreId = std::uint32_t;
using Cycles = std::uint64_t;

inline constexpr std::size_t kPageSize = 4096;
inline constexpr std::size_t kLineSize = 64;
inline constexpr std::size_t kLinesPerPage = kPageSize / kLineSize;

enum class Tier : std::uint8_t { Fast = 0, Slow = 1 };
enum class AccessKind : std::uint8_t { Read, Write };

inline constexpr std::size_t tier_index(Tier t) { return static_cast<std::size_t>(t); }
inline constexpr Tier other_tier(Tier t) { return t == Tier::Fast ? Tier::Slow : Tier::Fast; }

std::string_view to_string(Tier t);
std::string_view to_string(AccessKind k);

// A physical frame is identified by its tier and its index inside that tier.
struct FrameId {
  Tier tier = Tier::Fast;
  std::uint32_t index = 0;

  friend bool operator==(const FrameId&, const FrameId&) = default;
  friend auto operator<=>(const FrameId&, const FrameId&) = default;
};

enum class ErrorCode {
  UnknownPage,
  NotMapped,
  FrameUnallocated,
  InvariantBreach,
  OutOfMemory,
  ConfigError,
  SchemaMismatch,
};

std::string_view to_string(ErrorCode code);

class SimError : public std::runtime_error {
 public:
  SimError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& what);

}  // namespace tierlab
