#include "doctest.h"
#include "tierlab/access_tracking.hpp"

using namespace tierlab;

namespace {

struct Fixture {
  MemorySystem mem;
  AccessTracker tracker;

  explicit Fixture(std::size_t pages = 32, PressureThresholds fast = {10, 2})
      : mem(platform_profile("A", 100, 100).fast, platform_profile("A", 100, 100).slow,
            CostModel{}, pages, 2),
        tracker(mem, fast, PressureThresholds::defaults(100)) {}

  void place(PageId p, Tier t) {
    mem.map_initial(p, t);
    tracker.track(p, t);
  }
};

}  // namespace

TEST_CASE("default thresholds") {
  const auto th = PressureThresholds::defaults(16384);
  CHECK(th.low_water_mark == 327);
  CHECK(th.demotion_batch == 32);
  CHECK(th.high_water_mark() == 359);
  CHECK(PressureThresholds::defaults(10).low_water_mark == 1);
  CHECK_THROWS_AS((PressureThresholds{100, 1}.validate(100)), SimError);
}

TEST_CASE("page list keeps insertion order") {
  PageList l(8);
  l.push_back(3);
  l.push_back(1);
  l.push_back(5);
  l.remove(1);
  CHECK(l.to_vector() == std::vector<PageId>{3, 5});
  CHECK(l.front() == 3);
  CHECK(l.next(3) == 5);
  CHECK(l.next(5) == PageList::kNil);
  CHECK(l.contains(5));
  CHECK_FALSE(l.contains(1));
  CHECK(l.size() == 2);
}

TEST_CASE("mark_accessed two-step activation") {
  Fixture f;
  f.place(0, Tier::Slow);
  const auto& pi = f.mem.info(0);
  CHECK_FALSE(f.tracker.mark_accessed(0));
  CHECK(pi.referenced);
  CHECK_FALSE(pi.active);
  CHECK(f.tracker.mark_accessed(0));
  CHECK(pi.active);
  CHECK_FALSE(pi.referenced);
  CHECK(f.tracker.pagevec_size() == 1);
  CHECK(pi.lru_list == LruList::Inactive);  // not moved until the drain
  CHECK(f.tracker.drain_pagevec() == 1);
  CHECK(pi.lru_list == LruList::Active);
  CHECK(f.tracker.active(Tier::Slow).contains(0));
}

TEST_CASE("pagevec drains itself at fifteen") {
  Fixture f;
  for (PageId p = 0; p < 15; ++p) f.place(p, Tier::Slow);
  for (PageId p = 0; p < 14; ++p) f.tracker.request_activation(p);
  CHECK(f.tracker.pagevec_size() == 14);
  CHECK(f.tracker.active(Tier::Slow).empty());
  f.tracker.request_activation(14);
  CHECK(f.tracker.pagevec_size() == 0);
  CHECK(f.tracker.active(Tier::Slow).size() == 15);
  CHECK(f.tracker.activations() == 15);
}

TEST_CASE("duplicate activation requests move the page once") {
  Fixture f;
  f.place(0, Tier::Slow);
  for (int i = 0; i < 3; ++i) f.tracker.request_activation(0);
  CHECK(f.tracker.drain_pagevec() == 1);
}

TEST_CASE("kswapd scan ordering") {
  Fixture f(32, PressureThresholds{10, 2});
  for (PageId p = 0; p < 5; ++p) f.place(p, Tier::Fast);
  f.mem.entry(0).accessed = true;        // rotated, referenced afterwards
  f.mem.info_mut(1).referenced = true;   // rotated, flag cleared
  f.mem.info_mut(3).active = true;       // moved to active
  // pages 2 and 4 have nothing set

  CHECK(f.tracker.kswapd_scan(10).empty());  // not below the watermark

  ScanStats st;
  const auto victims = f.tracker.kswapd_scan(9, &st);
  CHECK(victims == std::vector<PageId>{2, 4});
  CHECK(st.rotated == 2);
  CHECK(st.activated == 1);
  CHECK(st.scanned == 5);
  CHECK_FALSE(f.mem.pte(0).accessed);
  CHECK(f.mem.info(0).referenced);
  CHECK_FALSE(f.mem.info(1).referenced);
  CHECK(f.tracker.active(Tier::Fast).to_vector() == std::vector<PageId>{3});
  CHECK(f.tracker.inactive(Tier::Fast).to_vector() == std::vector<PageId>{0, 1});
  CHECK_FALSE(f.tracker.tracked(2));
  CHECK_FALSE(f.tracker.tracked(4));
}

TEST_CASE("kswapd deactivates while active outnumbers inactive") {
  Fixture f(32, PressureThresholds{10, 2});
  for (PageId p = 0; p < 6; ++p) {
    f.place(p, Tier::Fast);
    f.mem.info_mut(p).active = true;
  }
  f.tracker.kswapd_scan(9);  // first pass pulls everything active
  REQUIRE(f.tracker.active(Tier::Fast).size() == 6);
  for (PageId p = 0; p < 6; ++p) f.mem.entry(p).accessed = true;
  ScanStats st;
  const auto victims = f.tracker.kswapd_scan(9, &st);
  CHECK(st.deactivated == 3);
  CHECK(victims.size() <= 2);
  CHECK(f.tracker.active(Tier::Fast).size() + f.tracker.inactive(Tier::Fast).size() + victims.size() == 6);
}

TEST_CASE("aging folds accessed bits of one tier") {
  Fixture f;
  for (PageId p = 0; p < 6; ++p) f.place(p, p < 3 ? Tier::Slow : Tier::Fast);
  for (PageId p = 0; p < 6; ++p) f.mem.entry(p).accessed = true;
  CHECK(f.tracker.age(Tier::Slow, 2) == 2);
  CHECK(f.tracker.age(Tier::Slow, 10) == 1);
  for (PageId p = 0; p < 3; ++p) {
    CHECK_FALSE(f.mem.pte(p).accessed);
    CHECK(f.mem.info(p).referenced);
  }
  for (PageId p = 3; p < 6; ++p) CHECK(f.mem.pte(p).accessed);
}

TEST_CASE("promotion and demotion relink") {
  Fixture f;
  f.place(0, Tier::Slow);
  f.mem.info_mut(0).active = true;
  f.mem.info_mut(0).referenced = true;
  f.tracker.on_promoted(0);
  CHECK(f.tracker.active(Tier::Fast).contains(0));
  f.tracker.on_demoted(0);
  CHECK(f.tracker.inactive(Tier::Slow).contains(0));
  CHECK_FALSE(f.mem.info(0).active);
  CHECK_FALSE(f.mem.info(0).referenced);
  CHECK_THROWS_AS(f.tracker.track(0, Tier::Slow), SimError);
}
