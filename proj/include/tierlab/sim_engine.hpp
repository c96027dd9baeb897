#pragma once

// Deterministic discrete-event engine: application cores, background actors,
// periodic snapshots and the transient/stable phase split.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tierlab/policies.hpp"
#include "tierlab/workload.hpp"

namespace tierlab {

struct MetricsSnapshot {
  Cycles cycle = 0;
  std::uint64_t promotions_read = 0;
  std::uint64_t promotions_write = 0;
  std::uint64_t demotions_remap = 0;
  std::uint64_t demotions_copy = 0;
  Cycles demotion_cycles_remap = 0;
  Cycles demotion_cycles_copy = 0;
  std::uint64_t tpm_committed = 0;
  std::uint64_t tpm_aborted = 0;
  std::uint64_t minor_faults = 0;
  std::uint64_t shadow_faults = 0;
  std::uint64_t access_errors = 0;
  std::uint64_t access_count = 0;
  Cycles total_access_cycles = 0;
  Cycles latency_cycles = 0;
  Cycles fault_stall = 0;
  Cycles migration_stall = 0;
  Cycles blocked_stall = 0;
  // Gauges: value at `cycle`, not accumulated.
  std::uint64_t shadow_pages = 0;
  std::uint64_t fast_free = 0;
  std::uint64_t wss_fast_resident = 0;
  // Accessed bytes per cycle over the span this snapshot covers.
  double throughput_proxy = 0.0;

  std::uint64_t promotions() const { return promotions_read + promotions_write; }
  std::uint64_t demotions() const { return demotions_remap + demotions_copy; }
  std::uint64_t migrations() const { return promotions() + demotions(); }
  double mean_access_cycles() const;
};

// Counters of `later` minus `earlier`, gauges of `later`; throughput over the
// cycles between the two.
MetricsSnapshot snapshot_delta(const MetricsSnapshot& later, const MetricsSnapshot& earlier);

struct WindowStat {
  Cycles start = 0;
  Cycles end = 0;
  std::uint64_t migrations = 0;
  std::uint64_t wss_fast_resident = 0;
};

struct StableVerdict {
  bool stable = false;
  bool thrashing = false;
};

inline constexpr double kStableTolerance = 0.10;
inline constexpr std::size_t kStableWindows = 3;

// Looks at the last (up to) three windows: stable when none of them migrated,
// or when consecutive migration counts differ by less than 10% and the
// working set's fast residency is not growing (thrashing).
StableVerdict detect_stable(std::span<const WindowStat> windows);

struct PhaseReport {
  Cycles transient_end_cycle = 0;
  Cycles run_end_cycle = 0;
  bool stable_detected = false;
  bool thrashing = false;
  MetricsSnapshot transient;
  MetricsSnapshot stable;
  MetricsSnapshot total;
};

// `snaps` must start at cycle 0; every consecutive pair forms one window.
PhaseReport build_phase_report(const std::vector<MetricsSnapshot>& snaps);

struct SimConfig {
  Scenario scenario;
  PolicyConfig policy;
  std::string platform = "A";
  TierSpec fast;
  TierSpec slow;
  CostModel costs;
  std::uint32_t cores = 4;
  std::uint64_t seed = 0;
  SimParams sim;
  Cycles snapshot_interval = 1'000'000;
  std::string trace_path;  // optional "cycle,page,kind,core" export
};

struct RunResult {
  PhaseReport phases;
  std::vector<MetricsSnapshot> snapshots;
  bool oom = false;
  std::string error;
  std::vector<Cycles> core_finish;
  Cycles core_busy_total = 0;
  std::uint64_t integrity_violations = 0;
  SuccessRatio ratio;
  Counters counters;
  CycleLedger ledger;
  std::uint64_t hint_faults = 0;
  std::uint64_t shadow_reclaimed = 0;
  bool frames_conserved = true;
};

RunResult run_simulation(const SimConfig& cfg);

}  // namespace tierlab
