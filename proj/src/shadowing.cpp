#include "tierlab/shadowing.hpp"

#include <algorithm>

namespace tierlab {

std::string_view to_string(DemotionMode m) { return m == DemotionMode::Remap ? "remap" : "copy"; }

void ShadowIndex::insert(FrameId fast_frame, PageId page, FrameId slow_frame) {
  if (fast_frame.tier != Tier::Fast || slow_frame.tier != Tier::Slow)
    raise(ErrorCode::InvariantBreach, "shadow index maps fast frames to slow frames");
  const auto seq = next_seq_++;
  const auto [it, inserted] = by_fast_.emplace(fast_frame.index, ShadowEntry{page, slow_frame, seq});
  if (!inserted) raise(ErrorCode::InvariantBreach, "duplicate shadow for fast frame");
  fifo_.emplace(seq, fast_frame.index);
}

std::optional<ShadowEntry> ShadowIndex::find(FrameId fast_frame) const {
  if (fast_frame.tier != Tier::Fast) return std::nullopt;
  auto it = by_fast_.find(fast_frame.index);
  if (it == by_fast_.end()) return std::nullopt;
  return it->second;
}

ShadowEntry ShadowIndex::erase(FrameId fast_frame) {
  auto it = by_fast_.find(fast_frame.index);
  if (fast_frame.tier != Tier::Fast || it == by_fast_.end())
    raise(ErrorCode::InvariantBreach, "no shadow for fast frame");
  ShadowEntry e = it->second;
  fifo_.erase(e.seq);
  by_fast_.erase(it);
  return e;
}

std::optional<std::pair<FrameId, ShadowEntry>> ShadowIndex::oldest() const {
  if (fifo_.empty()) return std::nullopt;
  const auto idx = fifo_.begin()->second;
  return std::make_pair(FrameId{Tier::Fast, idx}, by_fast_.at(idx));
}

ShadowManager::ShadowManager(MemorySystem& mem, AccessTracker& tracker, bool enabled)
    : mem_(mem), tracker_(tracker), enabled_(enabled) {}

void ShadowManager::register_shadow(PageId page, FrameId fast_frame, FrameId slow_frame) {
  if (!enabled_) raise(ErrorCode::InvariantBreach, "shadowing disabled");
  auto& pi = mem_.info_mut(page);
  auto& e = mem_.entry(page);
  if (pi.shadow) raise(ErrorCode::InvariantBreach, "page already shadowed");
  if (!e.present || e.mapped_frame != fast_frame)
    raise(ErrorCode::InvariantBreach, "shadow master must be mapped on the fast frame");
  if (!mem_.frame_allocated(slow_frame))
    raise(ErrorCode::FrameUnallocated, "shadow frame not allocated");
  index_.insert(fast_frame, page, slow_frame);
  pi.shadow = true;
  e.shadow_rw = e.writable;
  e.writable = false;
}

bool ShadowManager::discard(PageId page) {
  auto& pi = mem_.info_mut(page);
  if (!pi.shadow) return false;
  auto& e = mem_.entry(page);
  if (!e.mapped_frame) raise(ErrorCode::InvariantBreach, "shadowed master not mapped");
  const auto entry = index_.find(*e.mapped_frame);
  if (!entry || entry->page != page)
    raise(ErrorCode::InvariantBreach, "shadow flag set without index entry");
  index_.erase(*e.mapped_frame);
  mem_.free_frame(entry->slow_frame);
  e.writable = e.shadow_rw;
  e.shadow_rw = false;
  pi.shadow = false;
  return true;
}

Cycles ShadowManager::shadow_page_fault(PageId page) {
  if (!mem_.info(page).shadow)
    raise(ErrorCode::InvariantBreach, "shadow fault on unshadowed page");
  discard(page);
  const Cycles c = mem_.costs().minor_fault_cost;
  mem_.ledger().add(CostCategory::MinorFault, c);
  return c;
}

DemotionResult ShadowManager::demote_page(PageId page) {
  const auto& pte = mem_.pte(page);
  if (!pte.present || pte.tier != Tier::Fast)
    raise(ErrorCode::InvariantBreach, "demotion of a page not resident in fast tier");
  DemotionResult r;
  const FrameId fast_frame = *pte.mapped_frame;

  if (mem_.info(page).shadow) {
    const ShadowEntry sh = index_.erase(fast_frame);
    if (sh.page != page) raise(ErrorCode::InvariantBreach, "shadow index points at another page");
    if (mem_.frame_version(sh.slow_frame) != mem_.frame_version(fast_frame))
      raise(ErrorCode::InvariantBreach, "remap demotion with a stale shadow");
    const auto unmap = mem_.atomic_unmap(page);
    r.cycles += unmap.cycles;
    r.cycles += mem_.remap(page, sh.slow_frame, unmap.old_pte.shadow_rw);
    mem_.free_frame(fast_frame);
    mem_.info_mut(page).shadow = false;
    r.mode = DemotionMode::Remap;
  } else {
    auto dst = allocate_with_reclaim(Tier::Slow);
    if (!dst) raise(ErrorCode::OutOfMemory, "slow tier exhausted during demotion");
    const auto unmap = mem_.atomic_unmap(page);
    r.cycles += unmap.cycles;
    r.cycles += mem_.copy_page(fast_frame, *dst);
    r.cycles += mem_.remap(page, *dst, unmap.old_pte.writable);
    mem_.free_frame(fast_frame);
    r.mode = DemotionMode::Copy;
  }
  tracker_.on_demoted(page);
  return r;
}

std::uint64_t ShadowManager::reclaim_shadow(std::uint64_t requested, ReclaimTrigger trigger) {
  const std::uint64_t target = trigger == ReclaimTrigger::AllocFailure
                                   ? std::min(kReclaimFactor * requested, index_.size())
                                   : std::min(requested, index_.size());
  std::uint64_t freed = 0;
  while (freed < target) {
    const auto victim = index_.oldest();
    if (!victim) break;
    discard(victim->second.page);
    ++freed;
  }
  reclaimed_ += freed;
  return freed;
}

std::optional<FrameId> ShadowManager::allocate_with_reclaim(Tier tier, std::uint64_t requested) {
  if (auto f = mem_.allocate_frame(tier)) return f;
  if (reclaim_shadow(requested, ReclaimTrigger::AllocFailure) == 0) return std::nullopt;
  return mem_.allocate_frame(tier);
}

}  // namespace tierlab
