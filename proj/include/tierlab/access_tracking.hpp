#pragma once

// Linux-style LRU tracking: per-tier active/inactive lists, the
// PG_referenced/PG_active flags, the activation pagevec and kswapd's scan.

#include <array>
#include <cstdint>
#include <vector>

#include "tierlab/mem_model.hpp"

namespace tierlab {

struct PressureThresholds {
  std::uint64_t low_water_mark = 0;
  std::uint64_t demotion_batch = 32;

  // 2% of capacity, batch 32.
  static PressureThresholds defaults(std::uint64_t capacity_pages);
  std::uint64_t high_water_mark() const { return low_water_mark + demotion_batch; }
  void validate(std::uint64_t capacity_pages) const;
};

// Intrusive doubly-linked list over dense page ids. A page may belong to at
// most one PageList that shares the same link arrays.
class PageList {
 public:
  static constexpr PageId kNil = 0xffffffffU;

  PageList() = default;
  explicit PageList(std::size_t page_count);

  void push_back(PageId p);
  void remove(PageId p);
  bool contains(PageId p) const { return linked_[p] != 0; }
  PageId front() const { return head_; }
  PageId next(PageId p) const { return next_[p]; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::vector<PageId> to_vector() const;

 private:
  PageId head_ = kNil;
  PageId tail_ = kNil;
  std::size_t size_ = 0;
  std::vector<PageId> prev_;
  std::vector<PageId> next_;
  std::vector<std::uint8_t> linked_;
};

struct ScanStats {
  std::uint64_t scanned = 0;
  std::uint64_t activated = 0;
  std::uint64_t deactivated = 0;
  std::uint64_t rotated = 0;
};

class AccessTracker {
 public:
  static constexpr std::size_t kPagevecCapacity = 15;

  AccessTracker(MemorySystem& mem, PressureThresholds fast, PressureThresholds slow);

  // Puts a resident page on the inactive list of `tier`.
  void track(PageId page, Tier tier);
  void untrack(PageId page);
  // Moves a migrated page onto `tier`: promoted pages land on the active
  // list with their flags intact, demoted pages lose both flags and land on
  // the inactive list.
  void on_promoted(PageId page);
  void on_demoted(PageId page);
  bool tracked(PageId page) const { return tier_of_[page] != kUntracked; }

  // Returns true when this call enqueued an activation request.
  bool mark_accessed(PageId page);
  // Fault-path activation request; duplicates allowed.
  void request_activation(PageId page);
  std::size_t drain_pagevec();
  std::size_t pagevec_size() const { return pagevec_.size(); }

  std::vector<PageId> kswapd_scan(std::uint64_t fast_free, ScanStats* stats = nullptr);
  // Round-robin over `tier`'s tracked pages: up to `budget` pages have their
  // accessed bit cleared and folded into mark_accessed. Returns pages folded.
  std::uint64_t age(Tier tier, std::uint64_t budget);

  const PressureThresholds& thresholds(Tier t) const { return thresholds_[tier_index(t)]; }
  const PageList& active(Tier t) const { return active_[tier_index(t)]; }
  const PageList& inactive(Tier t) const { return inactive_[tier_index(t)]; }
  std::uint64_t activations() const { return activations_; }

 private:
  static constexpr std::uint8_t kUntracked = 0xff;

  void link(PageId page, Tier tier, LruList list);
  void unlink(PageId page);
  void move_to_active(PageId page);

  MemorySystem& mem_;
  std::array<PressureThresholds, 2> thresholds_;
  std::array<PageList, 2> active_;
  std::array<PageList, 2> inactive_;
  std::vector<std::uint8_t> tier_of_;
  std::vector<PageId> pagevec_;
  std::array<std::size_t, 2> age_cursor_{};
  std::uint64_t activations_ = 0;
};

}  // namespace tierlab
