#pragma once

// Physical substrate of the simulator: two memory tiers made of frames, the
// page table, a per-core TLB directory and the cycle cost model.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tierlab/types.hpp"

namespace tierlab {

struct TierSpec {
  Tier tier = Tier::Fast;
  std::uint64_t capacity_pages = 0;
  Cycles read_latency = 0;
  Cycles write_latency = 0;
  double copy_bandwidth = 1.0;  // bytes per cycle, single thread

  void validate() const;
};

// Kernel-operation costs. The device latencies come from the platform tables;
// these are modelling defaults and are all overridable from the run config.
struct CostModel {
  Cycles minor_fault_cost = 2000;
  Cycles tlb_ipi_cost_per_core = 500;
  Cycles page_copy_cost = 1911;
  Cycles remap_cost = 300;
  Cycles queue_op_cost = 50;

  void validate() const;
};

// Cycles needed to move one 4 KiB page at `bytes_per_cycle`.
Cycles page_copy_cycles(double bytes_per_cycle);

struct PlatformProfile {
  std::string name;
  TierSpec fast;
  TierSpec slow;
  CostModel costs;
};

// Platforms A-D: measured tier read latencies plus slow-tier single-thread
// read bandwidth converted to bytes per cycle at the core clock.
PlatformProfile platform_profile(std::string_view name, std::uint64_t fast_pages,
                                 std::uint64_t slow_pages);
std::vector<std::string> platform_names();

struct PageTableEntry {
  PageId page_id = 0;
  std::optional<FrameId> mapped_frame;
  Tier tier = Tier::Fast;
  bool present = false;
  bool hint_armed = false;  // "protected": the next access raises a hint fault
  bool accessed = false;
  bool dirty = false;
  bool writable = false;
  bool shadow_rw = false;  // preserved permission of a shadowed master
  std::uint32_t map_count = 1;

  friend bool operator==(const PageTableEntry&, const PageTableEntry&) = default;
};

enum class LruList : std::uint8_t { None, Active, Inactive };

struct PageInfo {
  PageId page_id = 0;
  std::uint64_t content_version = 0;
  bool referenced = false;
  bool active = false;
  bool shadow = false;
  LruList lru_list = LruList::None;
};

enum class FaultKind : std::uint8_t { Hint, NotPresent, ShadowWrite, PermissionViolation };

std::string_view to_string(FaultKind f);

struct AccessResult {
  Cycles latency = 0;
  std::optional<FaultKind> fault;
  std::uint64_t observed_version = 0;
};

// Which cores hold a translation for each page, and which of those cached it
// with the dirty bit already set (a write from such a core does not touch the
// PTE again until the entry is shot down).
class TlbDirectory {
 public:
  static constexpr std::uint32_t kMaxCores = 64;

  TlbDirectory(std::size_t page_count, std::uint32_t cores);

  void record(PageId page, CoreId core, bool dirty);
  bool holds(PageId page, CoreId core) const;
  bool holds_dirty(PageId page, CoreId core) const;
  std::uint32_t holder_count(PageId page) const;
  // Drops every cached translation of `page`; returns the number of cores hit.
  std::uint32_t flush(PageId page);
  std::uint32_t cores() const { return cores_; }

 private:
  std::uint32_t cores_;
  std::vector<std::uint64_t> holders_;
  std::vector<std::uint64_t> dirty_holders_;
};

class FramePool {
 public:
  FramePool(Tier tier, std::uint64_t capacity);

  std::optional<FrameId> allocate();
  void release(FrameId frame);
  bool is_allocated(FrameId frame) const;

  std::uint64_t capacity() const { return allocated_.size(); }
  std::uint64_t free_count() const { return free_.size(); }
  std::uint64_t allocated_count() const { return allocated_count_; }

  std::uint64_t version(FrameId frame) const;
  void set_version(FrameId frame, std::uint64_t v);

 private:
  void check(FrameId frame) const;

  Tier tier_;
  std::vector<std::uint32_t> free_;  // LIFO stack, lowest index on top initially
  std::vector<std::uint8_t> allocated_;
  std::vector<std::uint64_t> versions_;
  std::uint64_t allocated_count_ = 0;
};

enum class CostCategory : std::uint8_t {
  Access,
  MinorFault,
  Shootdown,
  Copy,
  Remap,
  QueueOp,
  Count
};

std::string_view to_string(CostCategory c);

class CycleLedger {
 public:
  void add(CostCategory c, Cycles cycles);
  Cycles get(CostCategory c) const { return by_category_[static_cast<std::size_t>(c)]; }
  Cycles total() const { return total_; }
  std::uint64_t events() const { return events_; }

 private:
  std::array<Cycles, static_cast<std::size_t>(CostCategory::Count)> by_category_{};
  Cycles total_ = 0;
  std::uint64_t events_ = 0;
};

struct UnmapResult {
  PageTableEntry old_pte;
  Cycles cycles = 0;
};

class MemorySystem {
 public:
  MemorySystem(TierSpec fast, TierSpec slow, CostModel costs, std::size_t page_count,
               std::uint32_t cores);

  // Initial placement: allocate a frame on `tier` and map `page` writable.
  void map_initial(PageId page, Tier tier);
  // Permanently allocates frames that no page maps (kernel reserve).
  void reserve_frames(Tier tier, std::uint64_t count);

  AccessResult access(PageId page, AccessKind kind, CoreId core);

  Cycles clear_dirty_and_flush(PageId page);
  UnmapResult atomic_unmap(PageId page);
  Cycles remap(PageId page, FrameId frame, bool writable);
  Cycles restore(PageId page, const PageTableEntry& old_pte);

  std::optional<FrameId> allocate_frame(Tier tier);
  void free_frame(FrameId frame);
  // Copies frame contents; the destination observes the source version as of now.
  Cycles copy_page(FrameId src, FrameId dst);

  Cycles tlb_shootdown(PageId page);
  Cycles arm_protection(PageId page);
  void disarm_protection(PageId page);

  const PageTableEntry& pte(PageId page) const {
    check_page(page);
    return ptes_[page];
  }
  PageTableEntry& entry(PageId page) {
    check_page(page);
    return ptes_[page];
  }
  const PageInfo& info(PageId page) const {
    check_page(page);
    return infos_[page];
  }
  PageInfo& info_mut(PageId page);

  std::uint64_t frame_version(FrameId frame) const;
  bool frame_allocated(FrameId frame) const;

  std::size_t page_count() const { return ptes_.size(); }
  std::uint32_t cores() const { return tlb_.cores(); }
  const TierSpec& tier_spec(Tier t) const { return specs_[tier_index(t)]; }
  const CostModel& costs() const { return costs_; }
  const TlbDirectory& tlb() const { return tlb_; }

  std::uint64_t capacity(Tier t) const { return pools_[tier_index(t)].capacity(); }
  std::uint64_t free_frames(Tier t) const { return pools_[tier_index(t)].free_count(); }
  std::uint64_t allocated_frames(Tier t) const { return pools_[tier_index(t)].allocated_count(); }
  std::uint64_t reserved_frames(Tier t) const { return reserved_[tier_index(t)]; }
  // Number of present pages mapped on tier t.
  std::uint64_t resident_pages(Tier t) const { return resident_[tier_index(t)]; }

  CycleLedger& ledger() { return ledger_; }
  const CycleLedger& ledger() const { return ledger_; }

  // allocated + free == capacity for both tiers.
  bool frames_conserved() const;

 private:
  void check_page(PageId page) const {
    if (page >= ptes_.size()) page_error(page);
  }
  [[noreturn]] void page_error(PageId page) const;

  std::array<TierSpec, 2> specs_;
  CostModel costs_;
  std::array<FramePool, 2> pools_;
  std::array<std::uint64_t, 2> reserved_{};
  std::array<std::uint64_t, 2> resident_{};
  std::vector<PageTableEntry> ptes_;
  std::vector<PageInfo> infos_;
  TlbDirectory tlb_;
  CycleLedger ledger_;
};

}  // namespace tierlab
