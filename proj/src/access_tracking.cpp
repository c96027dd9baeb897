#include "tierlab/access_tracking.hpp"

#include <algorithm>

namespace tierlab {

PressureThresholds PressureThresholds::defaults(std::uint64_t capacity_pages) {
  PressureThresholds t;
  t.low_water_mark = std::max<std::uint64_t>(1, capacity_pages / 50);
  t.demotion_batch = 32;
  return t;
}

void PressureThresholds::validate(std::uint64_t capacity_pages) const {
  if (low_water_mark >= capacity_pages)
    raise(ErrorCode::ConfigError, "low_water_mark must be below tier capacity");
  if (demotion_batch == 0) raise(ErrorCode::ConfigError, "demotion_batch must be > 0");
}

// --- PageList ---------------------------------------------------------------

PageList::PageList(std::size_t page_count)
    : prev_(page_count, kNil), next_(page_count, kNil), linked_(page_count, 0) {}

void PageList::push_back(PageId p) {
  if (linked_[p]) raise(ErrorCode::InvariantBreach, "page already on list");
  prev_[p] = tail_;
  next_[p] = kNil;
  if (tail_ != kNil) next_[tail_] = p;
  else head_ = p;
  tail_ = p;
  linked_[p] = 1;
  ++size_;
}

void PageList::remove(PageId p) {
  if (!linked_[p]) raise(ErrorCode::InvariantBreach, "page not on list");
  if (prev_[p] != kNil) next_[prev_[p]] = next_[p];
  else head_ = next_[p];
  if (next_[p] != kNil) prev_[next_[p]] = prev_[p];
  else tail_ = prev_[p];
  prev_[p] = next_[p] = kNil;
  linked_[p] = 0;
  --size_;
}

std::vector<PageId> PageList::to_vector() const {
  std::vector<PageId> out;
  out.reserve(size_);
  for (PageId p = head_; p != kNil; p = next_[p]) out.push_back(p);
  return out;
}

// --- AccessTracker ----------------------------------------------------------

AccessTracker::AccessTracker(MemorySystem& mem, PressureThresholds fast, PressureThresholds slow)
    : mem_(mem),
      thresholds_{fast, slow},
      active_{PageList(mem.page_count()), PageList(mem.page_count())},
      inactive_{PageList(mem.page_count()), PageList(mem.page_count())},
      tier_of_(mem.page_count(), kUntracked) {
  fast.validate(mem.capacity(Tier::Fast));
  slow.validate(mem.capacity(Tier::Slow));
  pagevec_.reserve(kPagevecCapacity);
}

void AccessTracker::link(PageId page, Tier tier, LruList list) {
  auto& pi = mem_.info_mut(page);
  if (list == LruList::Active) active_[tier_index(tier)].push_back(page);
  else inactive_[tier_index(tier)].push_back(page);
  pi.lru_list = list;
  tier_of_[page] = static_cast<std::uint8_t>(tier_index(tier));
}

void AccessTracker::unlink(PageId page) {
  auto& pi = mem_.info_mut(page);
  if (tier_of_[page] == kUntracked) return;
  const auto t = tier_of_[page];
  if (pi.lru_list == LruList::Active) active_[t].remove(page);
  else if (pi.lru_list == LruList::Inactive) inactive_[t].remove(page);
  pi.lru_list = LruList::None;
  tier_of_[page] = kUntracked;
}

void AccessTracker::track(PageId page, Tier tier) {
  if (tracked(page)) raise(ErrorCode::InvariantBreach, "page tracked twice");
  link(page, tier, LruList::Inactive);
}

void AccessTracker::untrack(PageId page) { unlink(page); }

void AccessTracker::on_promoted(PageId page) {
  unlink(page);
  const auto& pi = mem_.info(page);
  link(page, Tier::Fast, pi.active ? LruList::Active : LruList::Inactive);
}

void AccessTracker::on_demoted(PageId page) {
  unlink(page);
  auto& pi = mem_.info_mut(page);
  pi.referenced = false;
  pi.active = false;
  link(page, Tier::Slow, LruList::Inactive);
}

void AccessTracker::move_to_active(PageId page) {
  const auto tier = static_cast<Tier>(tier_of_[page]);
  unlink(page);
  mem_.info_mut(page).active = true;
  link(page, tier, LruList::Active);
  ++activations_;
}

bool AccessTracker::mark_accessed(PageId page) {
  auto& pi = mem_.info_mut(page);
  if (!pi.active && pi.referenced) {
    pi.active = true;
    pi.referenced = false;
    request_activation(page);
    return true;
  }
  if (!pi.referenced) pi.referenced = true;
  return false;
}

void AccessTracker::request_activation(PageId page) {
  pagevec_.push_back(page);
  if (pagevec_.size() >= kPagevecCapacity) drain_pagevec();
}

std::size_t AccessTracker::drain_pagevec() {
  std::size_t moved = 0;
  for (PageId p : pagevec_) {
    if (!tracked(p) || mem_.info(p).lru_list != LruList::Inactive) continue;
    move_to_active(p);
    ++moved;
  }
  pagevec_.clear();
  return moved;
}

std::vector<PageId> AccessTracker::kswapd_scan(std::uint64_t fast_free, ScanStats* stats) {
  std::vector<PageId> victims;
  const auto& th = thresholds_[tier_index(Tier::Fast)];
  if (fast_free >= th.low_water_mark) return victims;

  ScanStats local;
  auto& act = active_[tier_index(Tier::Fast)];
  auto& inact = inactive_[tier_index(Tier::Fast)];
  const std::uint64_t scan_limit = 16 * th.demotion_batch;

  while (act.size() > inact.size() && local.deactivated < scan_limit) {
    const PageId p = act.front();
    act.remove(p);
    auto& pi = mem_.info_mut(p);
    pi.active = false;
    inact.push_back(p);
    pi.lru_list = LruList::Inactive;
    ++local.deactivated;
  }

  while (victims.size() < th.demotion_batch && local.scanned < scan_limit && !inact.empty()) {
    const PageId p = inact.front();
    ++local.scanned;
    auto& pi = mem_.info_mut(p);
    auto& e = mem_.entry(p);
    if (pi.active) {
      move_to_active(p);
      ++local.activated;
    } else if (e.accessed) {
      e.accessed = false;
      inact.remove(p);
      inact.push_back(p);
      mark_accessed(p);
      ++local.rotated;
    } else if (pi.referenced) {
      pi.referenced = false;
      inact.remove(p);
      inact.push_back(p);
      ++local.rotated;
    } else {
      unlink(p);
      victims.push_back(p);
    }
  }
  if (stats) *stats = local;
  return victims;
}

std::uint64_t AccessTracker::age(Tier tier, std::uint64_t budget) {
  const auto t = static_cast<std::uint8_t>(tier_index(tier));
  const std::size_t n = tier_of_.size();
  if (n == 0) return 0;
  std::uint64_t folded = 0;
  std::uint64_t examined = 0;
  auto& cursor = age_cursor_[t];
  for (std::size_t step = 0; step < n && examined < budget; ++step) {
    const auto p = static_cast<PageId>(cursor);
    cursor = (cursor + 1) % n;
    if (tier_of_[p] != t) continue;
    ++examined;
    auto& e = mem_.entry(p);
    if (!e.accessed) continue;
    e.accessed = false;
    mark_accessed(p);
    ++folded;
  }
  return folded;
}

}  // namespace tierlab
