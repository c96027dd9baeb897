#pragma once

// Management policies over the shared substrate: Nomad (TPM + shadowing),
// TPP-style synchronous promotion, sampling-based migration and no migration.

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tierlab/access_tracking.hpp"
#include "tierlab/mem_model.hpp"
#include "tierlab/shadowing.hpp"
#include "tierlab/tpm.hpp"
#include "tierlab/workload.hpp"

namespace tierlab {

enum class PolicyKind { Nomad, TppSync, Sampling, NoMigration };

std::string_view to_string(PolicyKind k);
std::optional<PolicyKind> parse_policy_kind(std::string_view s);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Nomad;
  std::uint64_t cooling_period = 2'000'000;  // samples; 0 disables cooling
  double sample_prob = 0.01;
  std::uint32_t sampling_budget = 32;  // promotions and demotions per tick
  std::uint32_t tpp_max_attempts = 10;
};

struct SimParams {
  Cycles slice = 10'000;
  std::uint64_t aging_budget = 512;      // slow pages folded per slice
  Cycles rearm_period = 4'000'000;       // full pass of the protection scanner
  TpmConfig tpm;
  std::optional<PressureThresholds> fast_thresholds;
  std::optional<PressureThresholds> slow_thresholds;
};

struct Counters {
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
  std::uint64_t sync_promotions = 0;
  std::uint64_t tpp_gave_up = 0;
  std::uint32_t tpp_last_attempts = 0;
  std::uint32_t tpp_max_attempts_seen = 0;
  std::uint64_t shadow_reclaimed = 0;
  Cycles tpm_unmapped_window = 0;
  Cycles sync_unmapped_window = 0;
};

// Everything a policy may touch during a run.
class SimContext {
 public:
  SimContext(TierSpec fast, TierSpec slow, CostModel costs, std::size_t page_count,
             std::uint32_t cores, SimParams params, bool shadows_enabled, std::uint64_t seed);

  MemorySystem mem;
  AccessTracker tracker;
  ShadowManager shadows;
  TransactionalMigrator tpm;
  SimParams params;
  Counters counters;
  Rng rng;
  std::vector<Cycles> blocked_until;
  std::vector<std::uint32_t> hint_faults_per_page;

  void block(PageId page, Cycles until);
  void count_promotion(AccessKind trigger);
  // Demotes a fast page starting at `now`; the page is inaccessible for the
  // returned number of cycles.
  DemotionResult demote(PageId page, Cycles now, bool rearm);
  // Unmap, copy, remap promotion with the page inaccessible throughout.
  // Returns nullopt on fast-tier Pressure.
  std::optional<Cycles> promote_blocking(PageId page, Cycles now);
};

struct FaultOutcome {
  Cycles fault_cycles = 0;
  Cycles migration_cycles = 0;
  bool rearm_after_access = false;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyKind kind() const = 0;
  virtual bool uses_shadows() const { return false; }
  virtual bool arms_slow_pages() const { return true; }

  virtual FaultOutcome on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles now) = 0;
  virtual void after_access(SimContext&, PageId, AccessKind) {}
  virtual void on_slice(SimContext&, Cycles) {}

  // Background actors run serially on their own timelines. A step does one
  // unit of work at `now` and returns its duration, or nullopt when idle.
  virtual std::size_t actor_count() const { return 0; }
  virtual std::string_view actor_name(std::size_t) const { return ""; }
  virtual std::optional<Cycles> actor_step(std::size_t actor, SimContext& ctx, Cycles now);
};

// kswapd: shadow reclaim first when the slow tier is short, then demotion of
// inactive fast pages in batches while the fast tier is below its watermark.
class KswapdActor {
 public:
  explicit KswapdActor(bool rearm) : rearm_(rearm) {}
  std::optional<Cycles> step(SimContext& ctx, Cycles now);
  std::size_t pending() const { return victims_.size(); }

 private:
  bool rearm_;
  std::deque<PageId> victims_;
};

class NomadPolicy : public Policy {
 public:
  PolicyKind kind() const override { return PolicyKind::Nomad; }
  bool uses_shadows() const override { return true; }
  FaultOutcome on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles now) override;
  void on_slice(SimContext& ctx, Cycles now) override;
  std::size_t actor_count() const override { return 2; }
  std::string_view actor_name(std::size_t a) const override { return a == 0 ? "kpromote" : "kswapd"; }
  std::optional<Cycles> actor_step(std::size_t actor, SimContext& ctx, Cycles now) override;

 private:
  std::optional<Cycles> kpromote_step(SimContext& ctx, Cycles now);
  void rearm_scan(SimContext& ctx);

  KswapdActor kswapd_{true};
  std::optional<MigrationTransaction> pending_;
  std::uint32_t slice_budget_used_ = 0;
  std::size_t rearm_cursor_ = 0;
};

class TppPolicy : public Policy {
 public:
  explicit TppPolicy(std::uint32_t max_attempts = 10) : max_attempts_(max_attempts) {}
  PolicyKind kind() const override { return PolicyKind::TppSync; }
  FaultOutcome on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles now) override;
  void on_slice(SimContext& ctx, Cycles now) override;
  std::size_t actor_count() const override { return 1; }
  std::string_view actor_name(std::size_t) const override { return "kswapd"; }
  std::optional<Cycles> actor_step(std::size_t actor, SimContext& ctx, Cycles now) override;

 private:
  std::uint32_t max_attempts_;
  KswapdActor kswapd_{true};
};

// Per-page sampled access counts with periodic halving.
class SamplingHistogram {
 public:
  SamplingHistogram(std::size_t page_count, std::uint64_t cooling_period);

  // Records one sample for `page` and applies cooling at period boundaries.
  void record(PageId page);
  void cool();
  void set_tier(PageId page, Tier tier);
  void set_count(PageId page, std::uint64_t count);

  std::uint64_t count(PageId page) const { return counts_[page]; }
  std::uint64_t samples_seen() const { return samples_; }
  std::uint64_t cooling_period() const { return cooling_period_; }
  std::uint64_t coolings() const { return coolings_; }
  // Highest-count page on `tier` (ties: lowest id), lowest-count likewise.
  std::optional<PageId> hottest(Tier tier) const;
  std::optional<PageId> coldest(Tier tier) const;

 private:
  using Key = std::pair<std::uint64_t, PageId>;
  void reindex(PageId page, std::uint64_t new_count);

  std::uint64_t cooling_period_;
  std::uint64_t samples_ = 0;
  std::uint64_t coolings_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint8_t> tier_;  // 0 fast, 1 slow, 0xff untracked
  std::array<std::set<Key>, 2> by_count_;
};

class SamplingPolicy : public Policy {
 public:
  SamplingPolicy(std::size_t page_count, const PolicyConfig& cfg);
  PolicyKind kind() const override { return PolicyKind::Sampling; }
  bool arms_slow_pages() const override { return false; }
  FaultOutcome on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles now) override;
  void after_access(SimContext& ctx, PageId page, AccessKind kind) override;
  void on_slice(SimContext& ctx, Cycles now) override;
  std::size_t actor_count() const override { return 1; }
  std::string_view actor_name(std::size_t) const override { return "sampler"; }
  std::optional<Cycles> actor_step(std::size_t actor, SimContext& ctx, Cycles now) override;

  // Places every resident page in the histogram's tier index.
  void attach(const SimContext& ctx);
  const SamplingHistogram& histogram() const { return hist_; }

 private:
  PolicyConfig cfg_;
  SamplingHistogram hist_;
  std::vector<std::uint8_t> last_kind_;
  std::uint32_t promoted_this_tick_ = 0;
  std::uint32_t demoted_this_tick_ = 0;
};

class NoMigrationPolicy : public Policy {
 public:
  PolicyKind kind() const override { return PolicyKind::NoMigration; }
  FaultOutcome on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles now) override;
};

std::unique_ptr<Policy> make_policy(const PolicyConfig& cfg, std::size_t page_count);

}  // namespace tierlab
