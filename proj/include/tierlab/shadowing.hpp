#pragma once

// Non-exclusive tiering: promoted pages keep their slow-tier original as a
// shadow so a clean master can later be demoted by remapping alone.

#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>

#include "tierlab/access_tracking.hpp"
#include "tierlab/mem_model.hpp"

namespace tierlab {

struct ShadowEntry {
  PageId page = 0;
  FrameId slow_frame;
  std::uint64_t seq = 0;
};

// fast frame index -> shadow. Iteration order for reclaim is registration order.
class ShadowIndex {
 public:
  void insert(FrameId fast_frame, PageId page, FrameId slow_frame);
  std::optional<ShadowEntry> find(FrameId fast_frame) const;
  ShadowEntry erase(FrameId fast_frame);
  // Oldest registration, if any.
  std::optional<std::pair<FrameId, ShadowEntry>> oldest() const;
  std::uint64_t size() const { return by_fast_.size(); }

 private:
  std::unordered_map<std::uint32_t, ShadowEntry> by_fast_;
  std::map<std::uint64_t, std::uint32_t> fifo_;
  std::uint64_t next_seq_ = 0;
};

enum class DemotionMode { Remap, Copy };
enum class ReclaimTrigger { Kswapd, AllocFailure };

std::string_view to_string(DemotionMode m);

struct DemotionResult {
  DemotionMode mode = DemotionMode::Copy;
  Cycles cycles = 0;
};

class ShadowManager {
 public:
  static constexpr std::uint64_t kReclaimFactor = 10;

  // `enabled` false turns shadow retention off (baselines): commits free the
  // old frame and demotion never finds a shadow.
  ShadowManager(MemorySystem& mem, AccessTracker& tracker, bool enabled = true);

  bool enabled() const { return enabled_; }

  void register_shadow(PageId page, FrameId fast_frame, FrameId slow_frame);
  Cycles shadow_page_fault(PageId page);
  // Drops the shadow of `page` (if any), restoring the master's permission.
  bool discard(PageId page);

  DemotionResult demote_page(PageId page);
  std::uint64_t reclaim_shadow(std::uint64_t requested, ReclaimTrigger trigger);

  // Allocation that falls back to shadow reclaim once on Pressure.
  std::optional<FrameId> allocate_with_reclaim(Tier tier, std::uint64_t requested = 1);

  std::uint64_t total_shadow_pages() const { return index_.size(); }
  const ShadowIndex& index() const { return index_; }
  std::uint64_t reclaimed_total() const { return reclaimed_; }

 private:
  MemorySystem& mem_;
  AccessTracker& tracker_;
  bool enabled_;
  ShadowIndex index_;
  std::uint64_t reclaimed_ = 0;
};

}  // namespace tierlab
