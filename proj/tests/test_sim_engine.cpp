#include <set>

#include "doctest.h"
#include "tierlab/sim_engine.hpp"

using namespace tierlab;

namespace {

std::vector<WindowStat> windows(std::vector<std::uint64_t> migrations, std::vector<std::uint64_t> resident) {
  std::vector<WindowStat> w;
  for (std::size_t i = 0; i < migrations.size(); ++i)
    w.push_back({i * 100, (i + 1) * 100, migrations[i], resident.empty() ? 0 : resident[i]});
  return w;
}

SimConfig make_config(ScenarioKind kind, PolicyKind policy, std::uint64_t duration,
                      double read_fraction = 1.0, std::uint64_t fast = 16384,
                      std::uint64_t slow = 16384) {
  SimConfig c;
  const auto p = platform_profile("A", fast, slow);
  c.fast = p.fast;
  c.slow = p.slow;
  c.costs = p.costs;
  c.seed = 3;
  ScenarioOptions opt;
  opt.duration = duration;
  opt.read_fraction = read_fraction;
  opt.seed = c.seed;
  c.scenario = build_scenario(kind, 1024, opt, fast, slow);
  c.policy.kind = policy;
  c.snapshot_interval = 2'000'000;
  return c;
}

}  // namespace

TEST_CASE("stable detector") {
  CHECK_FALSE(detect_stable(windows({0}, {})).stable);
  const auto zero = detect_stable(windows({500, 0, 0, 0}, {}));
  CHECK(zero.stable);
  CHECK_FALSE(zero.thrashing);
  CHECK_FALSE(detect_stable(windows({100, 50, 20}, {})).stable);
  const auto thrash = detect_stable(windows({1000, 1020, 1010}, {500, 500, 490}));
  CHECK(thrash.stable);
  CHECK(thrash.thrashing);
  // still converging: residency grows
  CHECK_FALSE(detect_stable(windows({1000, 1020, 1010}, {400, 450, 500})).stable);
  // the tolerance is strict
  CHECK_FALSE(detect_stable(windows({100, 110}, {})).stable);
  CHECK(detect_stable(windows({100, 109}, {})).stable);
  // only the last three windows count
  CHECK(detect_stable(windows({9000, 1, 0, 0, 0}, {})).stable);
}

TEST_CASE("phase report splits before the first stable group") {
  std::vector<MetricsSnapshot> snaps(7);
  const std::uint64_t promos[] = {0, 400, 700, 800, 800, 800, 800};
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    snaps[i].cycle = i * 1000;
    snaps[i].promotions_read = promos[i];
    snaps[i].access_count = i * 10;
  }
  const auto r = build_phase_report(snaps);
  CHECK(r.stable_detected);
  CHECK_FALSE(r.thrashing);
  // windows 3,4,5 are the first zero group, so the split is at snapshot 3
  CHECK(r.transient_end_cycle == 3000);
  CHECK(r.transient.promotions() == 800);
  CHECK(r.stable.promotions() == 0);
  CHECK(r.total.promotions() == 800);
  CHECK(r.transient.access_count + r.stable.access_count == r.total.access_count);
  CHECK(r.stable.throughput_proxy == doctest::Approx(30.0 * 64 / 3000));
}

TEST_CASE("phase report without a stable group is all transient") {
  std::vector<MetricsSnapshot> snaps(4);
  const std::uint64_t promos[] = {0, 100, 300, 700};
  for (std::size_t i = 0; i < 4; ++i) {
    snaps[i].cycle = i * 10;
    snaps[i].promotions_read = promos[i];
  }
  const auto r = build_phase_report(snaps);
  CHECK_FALSE(r.stable_detected);
  CHECK(r.transient_end_cycle == 30);
  CHECK(r.stable.promotions() == 0);
}

TEST_CASE("no-migration matches the closed form") {
  const auto cfg = make_config(ScenarioKind::Small, PolicyKind::NoMigration, 200'000, 0.7);
  const auto r = run_simulation(cfg);
  REQUIRE_FALSE(r.oom);

  // replay the same streams; placement never changes
  Workload w(cfg.scenario, cfg.cores);
  std::uint64_t expect = 0;
  std::set<PageId> slow_touched;
  for (CoreId c = 0; c < cfg.cores; ++c) {
    const auto quota = cfg.scenario.duration / cfg.cores + (c < cfg.scenario.duration % cfg.cores);
    for (std::uint64_t i = 0; i < quota; ++i) {
      const auto ev = w.next(c);
      Tier tier = Tier::Slow;
      for (const auto& range : cfg.scenario.placement)
        if (ev.page >= range.first && ev.page < range.first + range.count) tier = range.tier;
      const auto& spec = tier == Tier::Fast ? cfg.fast : cfg.slow;
      expect += ev.kind == AccessKind::Read ? spec.read_latency : spec.write_latency;
      if (tier == Tier::Slow) slow_touched.insert(ev.page);
    }
  }
  expect += slow_touched.size() * cfg.costs.minor_fault_cost;

  CHECK(r.phases.total.access_count == 200'000);
  CHECK(r.phases.total.minor_faults == slow_touched.size());
  CHECK(r.phases.total.total_access_cycles == expect);
  CHECK(r.core_busy_total == expect);
  CHECK(r.phases.total.promotions() == 0);
  CHECK(r.integrity_violations == 0);
}

TEST_CASE("every policy keeps content integrity and closes its accounting") {
  for (auto pk : {PolicyKind::Nomad, PolicyKind::TppSync, PolicyKind::Sampling, PolicyKind::NoMigration}) {
    CAPTURE(to_string(pk));
    const auto r = run_simulation(make_config(ScenarioKind::Small, pk, 300'000, 0.5));
    CHECK_FALSE(r.oom);
    CHECK(r.integrity_violations == 0);
    CHECK(r.frames_conserved);
    CHECK(r.core_busy_total == r.phases.total.total_access_cycles);
    const auto& t = r.phases.total;
    CHECK(t.total_access_cycles == t.latency_cycles + t.fault_stall + t.migration_stall + t.blocked_stall);
    CHECK(t.demotions_remap <= t.tpm_committed);
  }
}

TEST_CASE("same seed, same run") {
  const auto cfg = make_config(ScenarioKind::Medium, PolicyKind::Nomad, 200'000, 0.8);
  const auto a = run_simulation(cfg);
  const auto b = run_simulation(cfg);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    CHECK(a.snapshots[i].cycle == b.snapshots[i].cycle);
    CHECK(a.snapshots[i].total_access_cycles == b.snapshots[i].total_access_cycles);
    CHECK(a.snapshots[i].promotions() == b.snapshots[i].promotions());
  }
  CHECK(a.core_finish == b.core_finish);
}

TEST_CASE("undersized slow tier ends the run with a flagged partial result") {
  // slow tier exactly fits the initial placement, so the first demotion has nowhere to go
  auto cfg = make_config(ScenarioKind::Large, PolicyKind::TppSync, 2'000'000, 1.0, 16384, 11264);
  const auto r = run_simulation(cfg);
  CHECK(r.oom);
  CHECK_FALSE(r.error.empty());
  CHECK(r.phases.total.access_count < 2'000'000);
  CHECK_FALSE(r.snapshots.empty());
}

TEST_CASE("invalid scenario is a config error") {
  auto cfg = make_config(ScenarioKind::Small, PolicyKind::Nomad, 1000);
  cfg.scenario.wss_pages = cfg.scenario.rss_pages + 1;
  CHECK_THROWS_WITH_AS(run_simulation(cfg), doctest::Contains("wss_pages"), SimError);
}
