#include <algorithm>

#include "doctest.h"
#include "tierlab/shadowing.hpp"

using namespace tierlab;

namespace {

struct Fixture {
  MemorySystem mem;
  AccessTracker tracker;
  ShadowManager shadows;

  explicit Fixture(std::size_t pages = 128, std::uint64_t fast = 128, std::uint64_t slow = 128)
      : mem(platform_profile("A", fast, slow).fast, platform_profile("A", fast, slow).slow,
            CostModel{}, pages, 4),
        tracker(mem, PressureThresholds::defaults(fast), PressureThresholds::defaults(slow)),
        shadows(mem, tracker) {}

  void place(PageId p, Tier t, bool writable = true) {
    mem.map_initial(p, t);
    mem.entry(p).writable = writable;
    tracker.track(p, t);
  }

  // Promotion by hand, keeping the slow original as the shadow.
  void promote(PageId p) {
    const FrameId src = *mem.pte(p).mapped_frame;
    auto dst = mem.allocate_frame(Tier::Fast);
    REQUIRE(dst);
    const auto u = mem.atomic_unmap(p);
    mem.copy_page(src, *dst);
    mem.remap(p, *dst, u.old_pte.writable);
    shadows.register_shadow(p, *dst, src);
    tracker.on_promoted(p);
  }
};

}  // namespace

TEST_CASE("writable master becomes read-only with shadow_rw set") {
  Fixture f;
  f.place(0, Tier::Slow, true);
  f.promote(0);
  CHECK(f.mem.info(0).shadow);
  CHECK_FALSE(f.mem.pte(0).writable);
  CHECK(f.mem.pte(0).shadow_rw);
  CHECK(f.shadows.total_shadow_pages() == 1);
  CHECK(f.mem.allocated_frames(Tier::Slow) == 1);
}

TEST_CASE("read-only master keeps shadow_rw clear and reads never fault") {
  Fixture f;
  f.place(0, Tier::Slow, false);
  f.promote(0);
  CHECK_FALSE(f.mem.pte(0).shadow_rw);
  for (int i = 0; i < 5; ++i) CHECK_FALSE(f.mem.access(0, AccessKind::Read, 0).fault);
  // a write is a genuine violation and the shadow stays
  CHECK(f.mem.access(0, AccessKind::Write, 0).fault == FaultKind::PermissionViolation);
  CHECK(f.shadows.total_shadow_pages() == 1);
}

TEST_CASE("shadow page fault restores permission and frees the shadow") {
  Fixture f;
  f.place(0, Tier::Slow, true);
  f.promote(0);
  REQUIRE(f.mem.access(0, AccessKind::Write, 1).fault == FaultKind::ShadowWrite);
  CHECK(f.shadows.shadow_page_fault(0) == f.mem.costs().minor_fault_cost);
  CHECK(f.mem.pte(0).writable);
  CHECK_FALSE(f.mem.info(0).shadow);
  CHECK(f.shadows.total_shadow_pages() == 0);
  CHECK(f.mem.allocated_frames(Tier::Slow) == 0);
  const auto r = f.mem.access(0, AccessKind::Write, 1);
  CHECK_FALSE(r.fault);
  CHECK(f.mem.pte(0).dirty);
  CHECK_THROWS_AS(f.shadows.shadow_page_fault(0), SimError);
}

TEST_CASE("clean shadowed page demotes by remap") {
  Fixture f;
  f.place(0, Tier::Slow, true);
  f.promote(0);
  f.mem.access(0, AccessKind::Read, 0);
  f.mem.access(0, AccessKind::Read, 2);
  const auto copies = f.mem.ledger().get(CostCategory::Copy);
  const auto r = f.shadows.demote_page(0);
  CHECK(r.mode == DemotionMode::Remap);
  // two holders shot down plus one remap
  CHECK(r.cycles == 2 * 500 + 300);
  CHECK(f.mem.ledger().get(CostCategory::Copy) == copies);
  CHECK(f.mem.pte(0).tier == Tier::Slow);
  CHECK(f.mem.pte(0).writable);
  CHECK_FALSE(f.mem.info(0).shadow);
  CHECK(f.mem.allocated_frames(Tier::Fast) == 0);
  CHECK(f.mem.allocated_frames(Tier::Slow) == 1);
  CHECK(f.tracker.inactive(Tier::Slow).contains(0));
}

TEST_CASE("dirtied master and never-promoted page demote by copy") {
  Fixture f;
  f.place(0, Tier::Slow, true);
  f.place(1, Tier::Fast, true);
  f.promote(0);
  f.shadows.shadow_page_fault(0);
  f.mem.access(0, AccessKind::Write, 0);
  const auto r0 = f.shadows.demote_page(0);
  CHECK(r0.mode == DemotionMode::Copy);
  CHECK(r0.cycles == 500 + f.mem.costs().page_copy_cost + 300);
  CHECK(f.mem.access(0, AccessKind::Read, 0).observed_version == 1);
  CHECK(f.shadows.demote_page(1).mode == DemotionMode::Copy);
  CHECK(f.mem.frames_conserved());
}

TEST_CASE("reclaim arithmetic") {
  struct Case {
    std::uint64_t shadows, requested;
    ReclaimTrigger trigger;
  };
  const Case cases[] = {{100, 3, ReclaimTrigger::AllocFailure}, {7, 3, ReclaimTrigger::AllocFailure},
                        {0, 5, ReclaimTrigger::Kswapd},        {20, 5, ReclaimTrigger::Kswapd},
                        {50, 0, ReclaimTrigger::AllocFailure}, {9, 1, ReclaimTrigger::AllocFailure}};
  for (const auto& c : cases) {
    CAPTURE(c.shadows);
    CAPTURE(c.requested);
    Fixture f(128, 128, 128);
    for (PageId p = 0; p < c.shadows; ++p) {
      f.place(p, Tier::Slow);
      f.promote(p);
    }
    const auto factor = c.trigger == ReclaimTrigger::AllocFailure ? 10 : 1;
    const auto expect = std::min<std::uint64_t>(factor * c.requested, c.shadows);
    CHECK(f.shadows.reclaim_shadow(c.requested, c.trigger) == expect);
    CHECK(f.shadows.total_shadow_pages() == c.shadows - expect);
    CHECK(f.mem.allocated_frames(Tier::Slow) == c.shadows - expect);
  }
}

TEST_CASE("reclaim frees oldest registrations first") {
  Fixture f;
  for (PageId p = 0; p < 6; ++p) f.place(p, Tier::Slow);
  for (PageId p : {4, 1, 5, 0, 3, 2}) f.promote(p);
  f.shadows.reclaim_shadow(3, ReclaimTrigger::Kswapd);
  CHECK_FALSE(f.mem.info(4).shadow);
  CHECK_FALSE(f.mem.info(1).shadow);
  CHECK_FALSE(f.mem.info(5).shadow);
  CHECK(f.mem.info(0).shadow);
  CHECK(f.mem.info(3).shadow);
  CHECK(f.mem.info(2).shadow);
  CHECK(f.mem.pte(4).writable);
}

TEST_CASE("allocation failure reclaims and retries once") {
  Fixture f(64, 64, 8);
  for (PageId p = 0; p < 5; ++p) {
    f.place(p, Tier::Slow);
    f.promote(p);
  }
  // slow tier: 5 shadows + 3 resident pages, full
  for (PageId p = 5; p < 8; ++p) f.place(p, Tier::Slow);
  REQUIRE(f.mem.free_frames(Tier::Slow) == 0);
  auto frame = f.shadows.allocate_with_reclaim(Tier::Slow, 1);
  CHECK(frame.has_value());
  CHECK(f.shadows.total_shadow_pages() == 0);  // min(10, 5)
  CHECK(f.shadows.reclaimed_total() == 5);
}

TEST_CASE("shadow index rejects a second entry for the same frame") {
  ShadowIndex idx;
  idx.insert(FrameId{Tier::Fast, 3}, 1, FrameId{Tier::Slow, 9});
  CHECK_THROWS_AS(idx.insert(FrameId{Tier::Fast, 3}, 2, FrameId{Tier::Slow, 10}), SimError);
  CHECK(idx.find(FrameId{Tier::Fast, 3})->page == 1);
  CHECK_FALSE(idx.find(FrameId{Tier::Fast, 4}));
}

TEST_CASE("disabled shadowing reclaims nothing") {
  Fixture f;
  ShadowManager off(f.mem, f.tracker, false);
  CHECK_FALSE(off.enabled());
  CHECK(off.reclaim_shadow(10, ReclaimTrigger::AllocFailure) == 0);
}
