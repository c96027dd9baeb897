#include "tierlab/policies.hpp"

#include <algorithm>

namespace tierlab {

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Nomad: return "nomad";
    case PolicyKind::TppSync: return "tpp";
    case PolicyKind::Sampling: return "sampling";
    case PolicyKind::NoMigration: return "none";
  }
  return "?";
}

std::optional<PolicyKind> parse_policy_kind(std::string_view s) {
  if (s == "nomad") return PolicyKind::Nomad;
  if (s == "tpp" || s == "tpp_sync") return PolicyKind::TppSync;
  if (s == "sampling" || s == "memtis") return PolicyKind::Sampling;
  if (s == "none" || s == "no_migration") return PolicyKind::NoMigration;
  return std::nullopt;
}

// --- SimContext -------------------------------------------------------------

SimContext::SimContext(TierSpec fast, TierSpec slow, CostModel costs, std::size_t page_count,
                       std::uint32_t cores, SimParams p, bool shadows_enabled, std::uint64_t seed)
    : mem(fast, slow, costs, page_count, cores),
      tracker(mem, p.fast_thresholds.value_or(PressureThresholds::defaults(fast.capacity_pages)),
              p.slow_thresholds.value_or(PressureThresholds::defaults(slow.capacity_pages))),
      shadows(mem, tracker, shadows_enabled),
      tpm(mem, tracker, shadows, p.tpm),
      params(p),
      rng(derive_seed(seed, 0xc0ffee)),
      blocked_until(page_count, 0),
      hint_faults_per_page(page_count, 0) {}

void SimContext::block(PageId page, Cycles until) {
  blocked_until[page] = std::max(blocked_until[page], until);
}

void SimContext::count_promotion(AccessKind trigger) {
  if (trigger == AccessKind::Write) ++counters.promotions_write;
  else ++counters.promotions_read;
}

DemotionResult SimContext::demote(PageId page, Cycles now, bool rearm) {
  DemotionResult r = shadows.demote_page(page);
  if (r.mode == DemotionMode::Remap) {
    ++counters.demotions_remap;
    counters.demotion_cycles_remap += r.cycles;
  } else {
    ++counters.demotions_copy;
    counters.demotion_cycles_copy += r.cycles;
  }
  block(page, now + r.cycles);
  if (rearm) mem.arm_protection(page);
  return r;
}

std::optional<Cycles> SimContext::promote_blocking(PageId page, Cycles now) {
  auto dst = mem.allocate_frame(Tier::Fast);
  if (!dst) return std::nullopt;
  const FrameId src = *mem.pte(page).mapped_frame;
  const auto unmap = mem.atomic_unmap(page);
  Cycles c = unmap.cycles;
  c += mem.copy_page(src, *dst);
  c += mem.remap(page, *dst, unmap.old_pte.writable);
  mem.free_frame(src);
  tracker.on_promoted(page);
  block(page, now + c);
  counters.sync_unmapped_window += c;
  return c;
}

std::optional<Cycles> Policy::actor_step(std::size_t, SimContext&, Cycles) { return std::nullopt; }

// --- kswapd -----------------------------------------------------------------

std::optional<Cycles> KswapdActor::step(SimContext& ctx, Cycles now) {
  auto& mem = ctx.mem;
  const auto& slow_th = ctx.tracker.thresholds(Tier::Slow);
  if (ctx.shadows.enabled() && ctx.shadows.total_shadow_pages() > 0 &&
      mem.free_frames(Tier::Slow) < slow_th.low_water_mark) {
    const auto want = slow_th.high_water_mark() - mem.free_frames(Tier::Slow);
    const auto freed = ctx.shadows.reclaim_shadow(want, ReclaimTrigger::Kswapd);
    ctx.counters.shadow_reclaimed += freed;
    return std::max<Cycles>(1, freed * mem.costs().queue_op_cost);
  }

  if (victims_.empty()) {
    const auto free = mem.free_frames(Tier::Fast);
    if (free >= ctx.tracker.thresholds(Tier::Fast).low_water_mark) return std::nullopt;
    const auto v = ctx.tracker.kswapd_scan(free);
    if (v.empty()) return std::nullopt;
    victims_.assign(v.begin(), v.end());
  }
  const PageId page = victims_.front();
  victims_.pop_front();
  const auto& pte = mem.pte(page);
  if (!pte.present || pte.tier != Tier::Fast) return mem.costs().queue_op_cost;
  return ctx.demote(page, now, rearm_).cycles;
}

// --- Nomad ------------------------------------------------------------------

FaultOutcome NomadPolicy::on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles) {
  FaultOutcome out;
  if (!ctx.mem.pte(page).hint_armed) return out;
  ++ctx.counters.minor_faults;
  ++ctx.hint_faults_per_page[page];
  out.fault_cycles = ctx.tpm.on_hint_fault(page, kind);
  return out;
}

void NomadPolicy::rearm_scan(SimContext& ctx) {
  const std::size_t n = ctx.mem.page_count();
  if (n == 0 || ctx.params.rearm_period == 0) return;
  const auto per_slice = std::max<std::uint64_t>(
      1, (n * ctx.params.slice + ctx.params.rearm_period - 1) / ctx.params.rearm_period);
  for (std::uint64_t i = 0; i < per_slice; ++i) {
    const auto p = static_cast<PageId>(rearm_cursor_);
    rearm_cursor_ = (rearm_cursor_ + 1) % n;
    const auto& e = ctx.mem.pte(p);
    if (!e.present || e.tier != Tier::Slow || e.hint_armed) continue;
    if (ctx.tpm.queues().in_mpq(p) || ctx.tpm.in_flight(p)) continue;
    ctx.mem.arm_protection(p);
  }
}

void NomadPolicy::on_slice(SimContext& ctx, Cycles) {
  ctx.tpm.next_round();
  slice_budget_used_ = 0;
  ctx.tracker.age(Tier::Slow, ctx.params.aging_budget);
  rearm_scan(ctx);
}

std::optional<Cycles> NomadPolicy::kpromote_step(SimContext& ctx, Cycles now) {
  auto& tpm = ctx.tpm;
  if (pending_) {
    auto txn = std::move(*pending_);
    pending_.reset();
    const auto f = tpm.finish(txn, now);
    ctx.block(txn.page, now + f.cycles);
    ctx.counters.tpm_unmapped_window += f.unmapped_window;
    if (f.committed) {
      ++ctx.counters.tpm_committed;
      ctx.count_promotion(tpm.trigger_kind(txn.page));
    } else {
      ++ctx.counters.tpm_aborted;
    }
    return std::max<Cycles>(1, f.cycles);
  }
  if (slice_budget_used_ >= tpm.config().kpromote_budget) return std::nullopt;
  const auto page = tpm.next_candidate();
  if (!page) return std::nullopt;
  ++slice_budget_used_;
  auto b = tpm.begin(*page, now);
  switch (b.status) {
    case BeginStatus::Started:
      pending_ = std::move(b.txn);
      return std::max<Cycles>(1, b.cycles);
    case BeginStatus::Synchronous: {
      const Cycles c = tpm.migrate_sync(*page);
      if (c == 0) {
        tpm.queues().push_mpq_front(*page);
        return std::nullopt;
      }
      ctx.block(*page, now + c);
      ctx.counters.sync_unmapped_window += c;
      ++ctx.counters.sync_promotions;
      ctx.count_promotion(tpm.trigger_kind(*page));
      return c;
    }
    case BeginStatus::Deferred:
      // Fast tier short: leave the page queued and let kswapd make room.
      return std::nullopt;
    case BeginStatus::Skipped:
      return ctx.mem.costs().queue_op_cost;
  }
  return std::nullopt;
}

std::optional<Cycles> NomadPolicy::actor_step(std::size_t actor, SimContext& ctx, Cycles now) {
  return actor == 0 ? kpromote_step(ctx, now) : kswapd_.step(ctx, now);
}

// --- TPP --------------------------------------------------------------------

FaultOutcome TppPolicy::on_hint_fault(SimContext& ctx, PageId page, AccessKind kind, Cycles now) {
  FaultOutcome out;
  auto& mem = ctx.mem;
  if (!mem.pte(page).hint_armed) return out;
  mem.disarm_protection(page);
  ++ctx.counters.minor_faults;
  ++ctx.hint_faults_per_page[page];
  out.fault_cycles = mem.costs().minor_fault_cost;
  mem.ledger().add(CostCategory::MinorFault, out.fault_cycles);
  if (mem.pte(page).tier != Tier::Slow) return out;

  const auto& pi = mem.info(page);
  if (pi.lru_list != LruList::Active) {
    if (!ctx.tracker.mark_accessed(page)) ctx.tracker.request_activation(page);
  }
  if (pi.lru_list == LruList::Active) {
    for (std::uint32_t attempt = 1; attempt <= max_attempts_; ++attempt) {
      ctx.counters.tpp_last_attempts = attempt;
      ctx.counters.tpp_max_attempts_seen = std::max(ctx.counters.tpp_max_attempts_seen, attempt);
      const Cycles at = now + out.fault_cycles + out.migration_cycles;
      if (auto c = ctx.promote_blocking(page, at)) {
        out.migration_cycles += *c;
        ++ctx.counters.sync_promotions;
        ctx.count_promotion(kind);
        return out;
      }
      if (attempt == max_attempts_) break;
      // Direct reclaim on the faulting core before the next attempt.
      for (PageId v : ctx.tracker.kswapd_scan(mem.free_frames(Tier::Fast))) {
        const Cycles t = now + out.fault_cycles + out.migration_cycles;
        out.migration_cycles += ctx.demote(v, t, true).cycles;
      }
    }
    ++ctx.counters.tpp_gave_up;
  }
  out.rearm_after_access = true;
  return out;
}

void TppPolicy::on_slice(SimContext& ctx, Cycles) {
  ctx.tracker.age(Tier::Slow, ctx.params.aging_budget);
}

std::optional<Cycles> TppPolicy::actor_step(std::size_t, SimContext& ctx, Cycles now) {
  return kswapd_.step(ctx, now);
}

// --- Sampling ---------------------------------------------------------------

SamplingHistogram::SamplingHistogram(std::size_t page_count, std::uint64_t cooling_period)
    : cooling_period_(cooling_period), counts_(page_count, 0), tier_(page_count, 0xff) {}

void SamplingHistogram::reindex(PageId page, std::uint64_t new_count) {
  if (tier_[page] != 0xff) {
    auto& s = by_count_[tier_[page]];
    s.erase({counts_[page], page});
    s.insert({new_count, page});
  }
  counts_[page] = new_count;
}

void SamplingHistogram::record(PageId page) {
  reindex(page, counts_[page] + 1);
  ++samples_;
  if (cooling_period_ > 0 && samples_ % cooling_period_ == 0) cool();
}

void SamplingHistogram::cool() {
  for (auto& s : by_count_) s.clear();
  for (std::size_t p = 0; p < counts_.size(); ++p) {
    counts_[p] /= 2;
    if (tier_[p] != 0xff) by_count_[tier_[p]].insert({counts_[p], static_cast<PageId>(p)});
  }
  ++coolings_;
}

void SamplingHistogram::set_tier(PageId page, Tier tier) {
  if (tier_[page] != 0xff) by_count_[tier_[page]].erase({counts_[page], page});
  tier_[page] = static_cast<std::uint8_t>(tier_index(tier));
  by_count_[tier_[page]].insert({counts_[page], page});
}

void SamplingHistogram::set_count(PageId page, std::uint64_t count) { reindex(page, count); }

std::optional<PageId> SamplingHistogram::hottest(Tier tier) const {
  const auto& s = by_count_[tier_index(tier)];
  if (s.empty()) return std::nullopt;
  // Highest count, lowest id among equals.
  const auto top = s.rbegin()->first;
  return s.lower_bound({top, 0})->second;
}

std::optional<PageId> SamplingHistogram::coldest(Tier tier) const {
  const auto& s = by_count_[tier_index(tier)];
  if (s.empty()) return std::nullopt;
  return s.begin()->second;
}

SamplingPolicy::SamplingPolicy(std::size_t page_count, const PolicyConfig& cfg)
    : cfg_(cfg), hist_(page_count, cfg.cooling_period), last_kind_(page_count, 0) {
  if (!(cfg.sample_prob > 0.0 && cfg.sample_prob <= 1.0))
    raise(ErrorCode::ConfigError, "policy.sample_prob must be in (0, 1]");
}

void SamplingPolicy::attach(const SimContext& ctx) {
  for (PageId p = 0; p < ctx.mem.page_count(); ++p) {
    const auto& e = ctx.mem.pte(p);
    if (e.present) hist_.set_tier(p, e.tier);
  }
}

FaultOutcome SamplingPolicy::on_hint_fault(SimContext& ctx, PageId page, AccessKind, Cycles) {
  FaultOutcome out;
  if (!ctx.mem.pte(page).hint_armed) return out;
  ctx.mem.disarm_protection(page);
  ++ctx.counters.minor_faults;
  out.fault_cycles = ctx.mem.costs().minor_fault_cost;
  ctx.mem.ledger().add(CostCategory::MinorFault, out.fault_cycles);
  return out;
}

void SamplingPolicy::after_access(SimContext& ctx, PageId page, AccessKind kind) {
  if (cfg_.sample_prob < 1.0 && ctx.rng.uniform01() >= cfg_.sample_prob) return;
  last_kind_[page] = static_cast<std::uint8_t>(kind);
  hist_.record(page);
}

void SamplingPolicy::on_slice(SimContext&, Cycles) {
  promoted_this_tick_ = 0;
  demoted_this_tick_ = 0;
}

std::optional<Cycles> SamplingPolicy::actor_step(std::size_t, SimContext& ctx, Cycles now) {
  if (promoted_this_tick_ >= cfg_.sampling_budget) return std::nullopt;
  const auto cand = hist_.hottest(Tier::Slow);
  if (!cand || hist_.count(*cand) == 0) return std::nullopt;

  auto& mem = ctx.mem;
  if (mem.free_frames(Tier::Fast) <= ctx.tracker.thresholds(Tier::Fast).low_water_mark) {
    if (demoted_this_tick_ >= cfg_.sampling_budget) return std::nullopt;
    const auto victim = hist_.coldest(Tier::Fast);
    if (!victim || hist_.count(*victim) >= hist_.count(*cand)) return std::nullopt;
    const auto r = ctx.demote(*victim, now, false);
    hist_.set_tier(*victim, Tier::Slow);
    ++demoted_this_tick_;
    return r.cycles;
  }
  const auto c = ctx.promote_blocking(*cand, now);
  if (!c) return std::nullopt;
  hist_.set_tier(*cand, Tier::Fast);
  ctx.count_promotion(static_cast<AccessKind>(last_kind_[*cand]));
  ++promoted_this_tick_;
  return *c;
}

// --- NoMigration ------------------------------------------------------------

FaultOutcome NoMigrationPolicy::on_hint_fault(SimContext& ctx, PageId page, AccessKind, Cycles) {
  FaultOutcome out;
  if (!ctx.mem.pte(page).hint_armed) return out;
  ctx.mem.disarm_protection(page);
  ++ctx.counters.minor_faults;
  ++ctx.hint_faults_per_page[page];
  out.fault_cycles = ctx.mem.costs().minor_fault_cost;
  ctx.mem.ledger().add(CostCategory::MinorFault, out.fault_cycles);
  return out;
}

std::unique_ptr<Policy> make_policy(const PolicyConfig& cfg, std::size_t page_count) {
  switch (cfg.kind) {
    case PolicyKind::Nomad: return std::make_unique<NomadPolicy>();
    case PolicyKind::TppSync: return std::make_unique<TppPolicy>(cfg.tpp_max_attempts);
    case PolicyKind::Sampling: return std::make_unique<SamplingPolicy>(page_count, cfg);
    case PolicyKind::NoMigration: return std::make_unique<NoMigrationPolicy>();
  }
  raise(ErrorCode::ConfigError, "unknown policy kind");
}

}  // namespace tierlab
