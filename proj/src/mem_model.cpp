#include "tierlab/mem_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace tierlab {

void TierSpec::validate() const {
  if (capacity_pages == 0) raise(ErrorCode::ConfigError, "tier capacity_pages must be > 0");
  if (read_latency == 0 || write_latency == 0)
    raise(ErrorCode::ConfigError, "tier latencies must be > 0");
  if (!(copy_bandwidth > 0.0)) raise(ErrorCode::ConfigError, "tier copy_bandwidth must be > 0");
}

void CostModel::validate() const {
  if (page_copy_cost <= remap_cost)
    raise(ErrorCode::ConfigError, "page_copy_cost must exceed remap_cost");
}

Cycles page_copy_cycles(double bytes_per_cycle) {
  if (!(bytes_per_cycle > 0.0)) raise(ErrorCode::ConfigError, "copy bandwidth must be > 0");
  return static_cast<Cycles>(std::llround(static_cast<double>(kPageSize) / bytes_per_cycle));
}

namespace {

struct PlatformRow {
  const char* name;
  Cycles fast_read;
  Cycles slow_read;
  double clock_ghz;
  double slow_read_gbps;  // single-thread
};

// Measured read latencies and single-thread bandwidths of the four testbeds.
constexpr PlatformRow kPlatforms[] = {
    {"A", 316, 854, 2.1, 4.5},
    {"B", 226, 737, 3.5, 4.45},
    {"C", 249, 1077, 3.9, 4.0},
    {"D", 391, 712, 3.7, 20.25},
};

}  // namespace

PlatformProfile platform_profile(std::string_view name, std::uint64_t fast_pages,
                                 std::uint64_t slow_pages) {
  for (const auto& row : kPlatforms) {
    if (name != row.name) continue;
    PlatformProfile p;
    p.name = row.name;
    const double slow_bpc = row.slow_read_gbps / row.clock_ghz;
    p.fast = TierSpec{Tier::Fast, fast_pages, row.fast_read, row.fast_read, slow_bpc};
    p.slow = TierSpec{Tier::Slow, slow_pages, row.slow_read, row.slow_read, slow_bpc};
    p.costs.page_copy_cost = page_copy_cycles(slow_bpc);
    return p;
  }
  raise(ErrorCode::ConfigError, "unknown platform profile '" + std::string(name) + "'");
}

std::vector<std::string> platform_names() {
  std::vector<std::string> out;
  for (const auto& row : kPlatforms) out.emplace_back(row.name);
  return out;
}

std::string_view to_string(FaultKind f) {
  switch (f) {
    case FaultKind::Hint: return "hint";
    case FaultKind::NotPresent: return "not_present";
    case FaultKind::ShadowWrite: return "shadow_write";
    case FaultKind::PermissionViolation: return "permission";
  }
  return "?";
}

std::string_view to_string(CostCategory c) {
  switch (c) {
    case CostCategory::Access: return "access";
    case CostCategory::MinorFault: return "minor_fault";
    case CostCategory::Shootdown: return "shootdown";
    case CostCategory::Copy: return "copy";
    case CostCategory::Remap: return "remap";
    case CostCategory::QueueOp: return "queue_op";
    case CostCategory::Count: break;
  }
  return "?";
}

// --- TlbDirectory -----------------------------------------------------------

TlbDirectory::TlbDirectory(std::size_t page_count, std::uint32_t cores)
    : cores_(cores), holders_(page_count, 0), dirty_holders_(page_count, 0) {
  if (cores == 0 || cores > kMaxCores)
    raise(ErrorCode::ConfigError, "core count must be in [1, 64]");
}

void TlbDirectory::record(PageId page, CoreId core, bool dirty) {
  const std::uint64_t bit = std::uint64_t{1} << core;
  holders_[page] |= bit;
  if (dirty) dirty_holders_[page] |= bit;
}

bool TlbDirectory::holds(PageId page, CoreId core) const {
  return (holders_[page] >> core) & 1U;
}

bool TlbDirectory::holds_dirty(PageId page, CoreId core) const {
  return (dirty_holders_[page] >> core) & 1U;
}

std::uint32_t TlbDirectory::holder_count(PageId page) const {
  return static_cast<std::uint32_t>(std::popcount(holders_[page]));
}

std::uint32_t TlbDirectory::flush(PageId page) {
  const auto n = holder_count(page);
  holders_[page] = 0;
  dirty_holders_[page] = 0;
  return n;
}

// --- FramePool --------------------------------------------------------------

FramePool::FramePool(Tier tier, std::uint64_t capacity)
    : tier_(tier), allocated_(capacity, 0), versions_(capacity, 0) {
  free_.reserve(capacity);
  for (std::uint64_t i = capacity; i > 0; --i) free_.push_back(static_cast<std::uint32_t>(i - 1));
}

std::optional<FrameId> FramePool::allocate() {
  if (free_.empty()) return std::nullopt;
  const auto idx = free_.back();
  free_.pop_back();
  allocated_[idx] = 1;
  ++allocated_count_;
  return FrameId{tier_, idx};
}

void FramePool::check(FrameId frame) const {
  if (frame.tier != tier_ || frame.index >= allocated_.size())
    raise(ErrorCode::FrameUnallocated, "frame outside tier pool");
}

void FramePool::release(FrameId frame) {
  check(frame);
  if (!allocated_[frame.index])
    raise(ErrorCode::FrameUnallocated, "double free of frame " + std::to_string(frame.index));
  allocated_[frame.index] = 0;
  --allocated_count_;
  free_.push_back(frame.index);
}

bool FramePool::is_allocated(FrameId frame) const {
  if (frame.tier != tier_ || frame.index >= allocated_.size()) return false;
  return allocated_[frame.index] != 0;
}

std::uint64_t FramePool::version(FrameId frame) const {
  check(frame);
  return versions_[frame.index];
}

void FramePool::set_version(FrameId frame, std::uint64_t v) {
  check(frame);
  versions_[frame.index] = v;
}

// --- CycleLedger ------------------------------------------------------------

void CycleLedger::add(CostCategory c, Cycles cycles) {
  by_category_[static_cast<std::size_t>(c)] += cycles;
  total_ += cycles;
  ++events_;
}

// --- MemorySystem -----------------------------------------------------------

MemorySystem::MemorySystem(TierSpec fast, TierSpec slow, CostModel costs,
                           std::size_t page_count, std::uint32_t cores)
    : specs_{fast, slow},
      costs_(costs),
      pools_{FramePool(Tier::Fast, fast.capacity_pages), FramePool(Tier::Slow, slow.capacity_pages)},
      ptes_(page_count),
      infos_(page_count),
      tlb_(page_count, cores) {
  fast.validate();
  slow.validate();
  costs.validate();
  if (fast.tier != Tier::Fast || slow.tier != Tier::Slow)
    raise(ErrorCode::ConfigError, "tier specs must be given as (fast, slow)");
  if (fast.read_latency >= slow.read_latency)
    raise(ErrorCode::ConfigError, "fast read latency must be below slow read latency");
  for (std::size_t i = 0; i < page_count; ++i) {
    ptes_[i].page_id = static_cast<PageId>(i);
    infos_[i].page_id = static_cast<PageId>(i);
  }
}

void MemorySystem::page_error(PageId page) const {
  raise(ErrorCode::UnknownPage, "page " + std::to_string(page));
}

void MemorySystem::map_initial(PageId page, Tier tier) {
  check_page(page);
  auto& e = ptes_[page];
  if (e.present) raise(ErrorCode::InvariantBreach, "page mapped twice at placement");
  auto frame = pools_[tier_index(tier)].allocate();
  if (!frame) raise(ErrorCode::ConfigError, std::string("placement exceeds ") +
                                                std::string(to_string(tier)) + " capacity");
  pools_[tier_index(tier)].set_version(*frame, infos_[page].content_version);
  e.mapped_frame = frame;
  e.tier = tier;
  e.present = true;
  e.writable = true;
  ++resident_[tier_index(tier)];
}

void MemorySystem::reserve_frames(Tier tier, std::uint64_t count) {
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!pools_[tier_index(tier)].allocate())
      raise(ErrorCode::ConfigError, "reserve exceeds tier capacity");
  }
  reserved_[tier_index(tier)] += count;
}

AccessResult MemorySystem::access(PageId page, AccessKind kind, CoreId core) {
  check_page(page);
  auto& e = ptes_[page];
  auto& pi = infos_[page];
  AccessResult r;
  if (!e.present) {
    r.fault = FaultKind::NotPresent;
    return r;
  }
  if (e.hint_armed) {
    r.fault = FaultKind::Hint;
    return r;
  }
  if (kind == AccessKind::Write && !e.writable) {
    r.fault = (pi.shadow && e.shadow_rw) ? FaultKind::ShadowWrite : FaultKind::PermissionViolation;
    return r;
  }

  const auto& spec = specs_[tier_index(e.tier)];
  auto& pool = pools_[tier_index(e.tier)];
  e.accessed = true;
  bool cached_dirty = false;
  if (kind == AccessKind::Write) {
    // A core whose TLB entry already carries D=1 writes without a PTE walk.
    if (!tlb_.holds_dirty(page, core)) e.dirty = true;
    cached_dirty = true;
    ++pi.content_version;
    pool.set_version(*e.mapped_frame, pi.content_version);
    r.latency = spec.write_latency;
  } else {
    r.latency = spec.read_latency;
  }
  r.observed_version = pool.version(*e.mapped_frame);
  tlb_.record(page, core, cached_dirty || tlb_.holds_dirty(page, core));
  ledger_.add(CostCategory::Access, r.latency);
  return r;
}

Cycles MemorySystem::tlb_shootdown(PageId page) {
  check_page(page);
  const Cycles c = costs_.tlb_ipi_cost_per_core * tlb_.flush(page);
  ledger_.add(CostCategory::Shootdown, c);
  return c;
}

Cycles MemorySystem::clear_dirty_and_flush(PageId page) {
  check_page(page);
  auto& e = ptes_[page];
  if (!e.present) raise(ErrorCode::NotMapped, "clear_dirty on unmapped page " + std::to_string(page));
  e.dirty = false;
  return tlb_shootdown(page);
}

UnmapResult MemorySystem::atomic_unmap(PageId page) {
  check_page(page);
  auto& e = ptes_[page];
  if (!e.present) raise(ErrorCode::NotMapped, "unmap of unmapped page " + std::to_string(page));
  UnmapResult out;
  out.old_pte = e;
  --resident_[tier_index(e.tier)];
  const auto map_count = e.map_count;
  const auto tier = e.tier;
  e = PageTableEntry{};
  e.page_id = page;
  e.tier = tier;
  e.map_count = map_count;
  out.cycles = tlb_shootdown(page);
  return out;
}

Cycles MemorySystem::remap(PageId page, FrameId frame, bool writable) {
  check_page(page);
  auto& e = ptes_[page];
  if (e.present) raise(ErrorCode::InvariantBreach, "remap of a mapped page " + std::to_string(page));
  if (!frame_allocated(frame))
    raise(ErrorCode::FrameUnallocated, "remap to a free frame " + std::to_string(frame.index));
  e.mapped_frame = frame;
  e.tier = frame.tier;
  e.present = true;
  e.writable = writable;
  e.hint_armed = false;
  e.accessed = false;
  e.dirty = false;
  e.shadow_rw = false;
  ++resident_[tier_index(frame.tier)];
  ledger_.add(CostCategory::Remap, costs_.remap_cost);
  return costs_.remap_cost;
}

Cycles MemorySystem::restore(PageId page, const PageTableEntry& old_pte) {
  check_page(page);
  auto& e = ptes_[page];
  if (e.present) raise(ErrorCode::InvariantBreach, "restore of a mapped page " + std::to_string(page));
  if (old_pte.page_id != page || !old_pte.present || !old_pte.mapped_frame)
    raise(ErrorCode::InvariantBreach, "restore with a foreign or unmapped PTE");
  if (!frame_allocated(*old_pte.mapped_frame))
    raise(ErrorCode::FrameUnallocated, "restore to a free frame");
  e = old_pte;
  ++resident_[tier_index(e.tier)];
  ledger_.add(CostCategory::Remap, costs_.remap_cost);
  return costs_.remap_cost;
}

std::optional<FrameId> MemorySystem::allocate_frame(Tier tier) {
  return pools_[tier_index(tier)].allocate();
}

void MemorySystem::free_frame(FrameId frame) { pools_[tier_index(frame.tier)].release(frame); }

Cycles MemorySystem::copy_page(FrameId src, FrameId dst) {
  if (!frame_allocated(src) || !frame_allocated(dst))
    raise(ErrorCode::FrameUnallocated, "copy between unallocated frames");
  pools_[tier_index(dst.tier)].set_version(dst, pools_[tier_index(src.tier)].version(src));
  ledger_.add(CostCategory::Copy, costs_.page_copy_cost);
  return costs_.page_copy_cost;
}

Cycles MemorySystem::arm_protection(PageId page) {
  check_page(page);
  auto& e = ptes_[page];
  if (!e.present) raise(ErrorCode::NotMapped, "arming an unmapped page " + std::to_string(page));
  if (e.hint_armed) return 0;
  e.hint_armed = true;
  return tlb_shootdown(page);
}

void MemorySystem::disarm_protection(PageId page) {
  check_page(page);
  ptes_[page].hint_armed = false;
}

PageInfo& MemorySystem::info_mut(PageId page) {
  check_page(page);
  return infos_[page];
}

std::uint64_t MemorySystem::frame_version(FrameId frame) const {
  return pools_[tier_index(frame.tier)].version(frame);
}

bool MemorySystem::frame_allocated(FrameId frame) const {
  return pools_[tier_index(frame.tier)].is_allocated(frame);
}

bool MemorySystem::frames_conserved() const {
  return std::all_of(pools_.begin(), pools_.end(), [](const FramePool& p) {
    return p.allocated_count() + p.free_count() == p.capacity();
  });
}

}  // namespace tierlab
