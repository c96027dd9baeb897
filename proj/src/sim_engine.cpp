#include "tierlab/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

namespace tierlab {

double MetricsSnapshot::mean_access_cycles() const {
  return access_count ? static_cast<double>(total_access_cycles) / static_cast<double>(access_count)
                      : 0.0;
}

MetricsSnapshot snapshot_delta(const MetricsSnapshot& later, const MetricsSnapshot& earlier) {
  MetricsSnapshot d = later;
  d.promotions_read -= earlier.promotions_read;
  d.promotions_write -= earlier.promotions_write;
  d.demotions_remap -= earlier.demotions_remap;
  d.demotions_copy -= earlier.demotions_copy;
  d.demotion_cycles_remap -= earlier.demotion_cycles_remap;
  d.demotion_cycles_copy -= earlier.demotion_cycles_copy;
  d.tpm_committed -= earlier.tpm_committed;
  d.tpm_aborted -= earlier.tpm_aborted;
  d.minor_faults -= earlier.minor_faults;
  d.shadow_faults -= earlier.shadow_faults;
  d.access_errors -= earlier.access_errors;
  d.access_count -= earlier.access_count;
  d.total_access_cycles -= earlier.total_access_cycles;
  d.latency_cycles -= earlier.latency_cycles;
  d.fault_stall -= earlier.fault_stall;
  d.migration_stall -= earlier.migration_stall;
  d.blocked_stall -= earlier.blocked_stall;
  const Cycles span = later.cycle - earlier.cycle;
  d.throughput_proxy =
      span ? static_cast<double>(d.access_count * kLineSize) / static_cast<double>(span) : 0.0;
  return d;
}

StableVerdict detect_stable(std::span<const WindowStat> windows) {
  StableVerdict v;
  if (windows.size() < 2) return v;
  const auto g = windows.last(std::min(kStableWindows, windows.size()));
  const bool all_zero =
      std::all_of(g.begin(), g.end(), [](const WindowStat& w) { return w.migrations == 0; });
  if (all_zero) {
    v.stable = true;
    return v;
  }
  for (std::size_t i = 1; i < g.size(); ++i) {
    const auto prev = static_cast<double>(g[i - 1].migrations);
    const auto cur = static_cast<double>(g[i].migrations);
    if (prev == 0.0 || std::fabs(cur - prev) >= kStableTolerance * prev) return v;
  }
  if (g.back().wss_fast_resident > g.front().wss_fast_resident) return v;
  v.stable = true;
  v.thrashing = true;
  return v;
}

PhaseReport build_phase_report(const std::vector<MetricsSnapshot>& snaps) {
  PhaseReport r;
  if (snaps.empty()) return r;
  const auto& first = snaps.front();
  const auto& last = snaps.back();
  r.run_end_cycle = last.cycle;
  r.total = snapshot_delta(last, first);

  std::vector<WindowStat> windows;
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    windows.push_back({snaps[i - 1].cycle, snaps[i].cycle,
                       snaps[i].migrations() - snaps[i - 1].migrations(),
                       snaps[i].wss_fast_resident});
  }
  std::size_t split = snaps.size() - 1;
  for (std::size_t k = 2; k <= windows.size(); ++k) {
    const auto v = detect_stable(std::span<const WindowStat>(windows.data(), k));
    if (!v.stable) continue;
    r.stable_detected = true;
    r.thrashing = v.thrashing;
    split = k - std::min(kStableWindows, k);
    break;
  }
  r.transient_end_cycle = snaps[split].cycle;
  r.transient = snapshot_delta(snaps[split], first);
  r.stable = snapshot_delta(last, snaps[split]);
  return r;
}

namespace {

enum class EventType : std::uint8_t { Core, Actor, Slice, Snapshot };

struct Event {
  Cycles t;
  std::uint64_t seq;
  EventType type;
  std::uint32_t arg;

  bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

struct CoreState {
  std::uint64_t quota = 0;
  bool has_pending = false;
  AccessEvent pending;
  bool done = false;
};

class Engine {
 public:
  explicit Engine(const SimConfig& cfg)
      : cfg_(cfg),
        policy_(make_policy(cfg.policy, cfg.scenario.rss_pages)),
        ctx_(cfg.fast, cfg.slow, cfg.costs, cfg.scenario.rss_pages, cfg.cores, cfg.sim,
             policy_->uses_shadows(), cfg.seed),
        workload_(cfg.scenario, cfg.cores) {}

  RunResult run();

 private:
  void push(Cycles t, EventType type, std::uint32_t arg = 0) {
    heap_.push(Event{t, seq_++, type, arg});
  }
  void setup();
  void on_core(CoreId c, Cycles now);
  void run_actor(std::size_t a, Cycles now);
  MetricsSnapshot snapshot(Cycles now) const;
  Cycles access(const AccessEvent& ev, Cycles now);

  const SimConfig& cfg_;
  std::unique_ptr<Policy> policy_;
  SimContext ctx_;
  Workload workload_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
  std::uint64_t seq_ = 0;
  std::vector<CoreState> cores_;
  std::vector<Cycles> core_finish_;
  std::vector<std::uint8_t> actor_busy_;
  std::uint32_t cores_done_ = 0;
  std::ofstream trace_;

  std::uint64_t access_count_ = 0;
  Cycles latency_ = 0;
  Cycles fault_stall_ = 0;
  Cycles migration_stall_ = 0;
  Cycles blocked_stall_ = 0;
  std::uint64_t integrity_violations_ = 0;
};

void Engine::setup() {
  const auto& sc = cfg_.scenario;
  auto& mem = ctx_.mem;
  if (sc.reserved_fast_pages) mem.reserve_frames(Tier::Fast, sc.reserved_fast_pages);
  for (const auto& r : sc.placement) {
    for (std::uint64_t i = 0; i < r.count; ++i) {
      const auto p = static_cast<PageId>(r.first + i);
      mem.map_initial(p, r.tier);
      ctx_.tracker.track(p, r.tier);
      if (r.tier == Tier::Slow && policy_->arms_slow_pages()) mem.arm_protection(p);
    }
  }
  if (auto* s = dynamic_cast<SamplingPolicy*>(policy_.get())) s->attach(ctx_);

  cores_.resize(cfg_.cores);
  core_finish_.assign(cfg_.cores, 0);
  for (CoreId c = 0; c < cfg_.cores; ++c) {
    cores_[c].quota = sc.duration / cfg_.cores + (c < sc.duration % cfg_.cores ? 1 : 0);
    push(0, EventType::Core, c);
  }
  actor_busy_.assign(policy_->actor_count(), 0);
  push(cfg_.sim.slice, EventType::Slice);
  push(cfg_.snapshot_interval, EventType::Snapshot);
  if (!cfg_.trace_path.empty()) {
    trace_.open(cfg_.trace_path);
    if (!trace_) raise(ErrorCode::ConfigError, "cannot open trace file " + cfg_.trace_path);
    trace_ << "cycle,page,kind,core\n";
  }
}

Cycles Engine::access(const AccessEvent& ev, Cycles now) {
  auto& mem = ctx_.mem;
  Cycles fault = 0;
  Cycles mig = 0;
  Cycles lat = 0;
  bool rearm = false;
  for (int guard = 0;; ++guard) {
    if (guard > 8) raise(ErrorCode::InvariantBreach, "access retried without progress");
    const auto r = mem.access(ev.page, ev.kind, ev.core);
    if (!r.fault) {
      lat = r.latency;
      if (r.observed_version != mem.info(ev.page).content_version) ++integrity_violations_;
      policy_->after_access(ctx_, ev.page, ev.kind);
      if (rearm) fault += mem.arm_protection(ev.page);
      break;
    }
    if (*r.fault == FaultKind::Hint) {
      const auto fo = policy_->on_hint_fault(ctx_, ev.page, ev.kind, now + fault + mig);
      fault += fo.fault_cycles;
      mig += fo.migration_cycles;
      rearm = rearm || fo.rearm_after_access;
    } else if (*r.fault == FaultKind::ShadowWrite) {
      fault += ctx_.shadows.shadow_page_fault(ev.page);
      ++ctx_.counters.shadow_faults;
    } else if (*r.fault == FaultKind::PermissionViolation) {
      ++ctx_.counters.access_errors;
      fault += mem.costs().minor_fault_cost;
      break;
    } else {
      raise(ErrorCode::InvariantBreach, "access reached an unmapped page " + std::to_string(ev.page));
    }
  }
  latency_ += lat;
  fault_stall_ += fault;
  migration_stall_ += mig;
  return lat + fault + mig;
}

void Engine::on_core(CoreId c, Cycles now) {
  auto& st = cores_[c];
  if (st.quota == 0) {
    if (!st.done) {
      st.done = true;
      core_finish_[c] = now;
      ++cores_done_;
    }
    return;
  }
  if (!st.has_pending) {
    st.pending = workload_.next(c);
    st.has_pending = true;
  }
  const PageId page = st.pending.page;
  if (ctx_.blocked_until[page] > now) {
    const Cycles until = ctx_.blocked_until[page];
    blocked_stall_ += until - now;
    push(until, EventType::Core, c);
    return;
  }
  const Cycles cost = access(st.pending, now);
  if (trace_.is_open())
    trace_ << now << ',' << page << ',' << to_string(st.pending.kind) << ',' << c << '\n';
  st.has_pending = false;
  --st.quota;
  ++access_count_;
  push(now + cost, EventType::Core, c);
}

void Engine::run_actor(std::size_t a, Cycles now) {
  const auto busy = policy_->actor_step(a, ctx_, now);
  if (busy) {
    actor_busy_[a] = 1;
    push(now + *busy, EventType::Actor, static_cast<std::uint32_t>(a));
  } else {
    actor_busy_[a] = 0;
  }
}

MetricsSnapshot Engine::snapshot(Cycles now) const {
  MetricsSnapshot s;
  const auto& k = ctx_.counters;
  s.cycle = now;
  s.promotions_read = k.promotions_read;
  s.promotions_write = k.promotions_write;
  s.demotions_remap = k.demotions_remap;
  s.demotions_copy = k.demotions_copy;
  s.demotion_cycles_remap = k.demotion_cycles_remap;
  s.demotion_cycles_copy = k.demotion_cycles_copy;
  s.tpm_committed = k.tpm_committed;
  s.tpm_aborted = k.tpm_aborted;
  s.minor_faults = k.minor_faults;
  s.shadow_faults = k.shadow_faults;
  s.access_errors = k.access_errors;
  s.access_count = access_count_;
  s.latency_cycles = latency_;
  s.fault_stall = fault_stall_;
  s.migration_stall = migration_stall_;
  s.blocked_stall = blocked_stall_;
  s.total_access_cycles = latency_ + fault_stall_ + migration_stall_ + blocked_stall_;
  s.shadow_pages = ctx_.shadows.total_shadow_pages();
  s.fast_free = ctx_.mem.free_frames(Tier::Fast);
  const auto& sc = cfg_.scenario;
  for (PageId p = sc.wss_first; p < sc.wss_first + sc.wss_pages; ++p) {
    const auto& e = ctx_.mem.pte(p);
    if (e.present && e.tier == Tier::Fast) ++s.wss_fast_resident;
  }
  s.throughput_proxy =
      now ? static_cast<double>(access_count_ * kLineSize) / static_cast<double>(now) : 0.0;
  return s;
}

RunResult Engine::run() {
  RunResult res;
  setup();
  res.snapshots.push_back(snapshot(0));
  Cycles now = 0;
  try {
    while (!heap_.empty() && cores_done_ < cfg_.cores) {
      const Event ev = heap_.top();
      heap_.pop();
      now = ev.t;
      switch (ev.type) {
        case EventType::Core:
          on_core(ev.arg, now);
          break;
        case EventType::Actor:
          run_actor(ev.arg, now);
          break;
        case EventType::Slice:
          policy_->on_slice(ctx_, now);
          for (std::size_t a = 0; a < actor_busy_.size(); ++a)
            if (!actor_busy_[a]) run_actor(a, now);
          push(now + cfg_.sim.slice, EventType::Slice);
          break;
        case EventType::Snapshot:
          res.snapshots.push_back(snapshot(now));
          push(now + cfg_.snapshot_interval, EventType::Snapshot);
          break;
      }
    }
  } catch (const SimError& e) {
    if (e.code() != ErrorCode::OutOfMemory) throw;
    res.oom = true;
    res.error = e.what();
  }
  Cycles end = now;
  if (!res.oom) end = *std::max_element(core_finish_.begin(), core_finish_.end());
  if (res.snapshots.back().cycle != end) res.snapshots.push_back(snapshot(end));

  res.phases = build_phase_report(res.snapshots);
  res.core_finish = core_finish_;
  for (auto f : core_finish_) res.core_busy_total += f;
  res.integrity_violations = integrity_violations_;
  res.ratio = ctx_.tpm.ratio();
  res.counters = ctx_.counters;
  res.ledger = ctx_.mem.ledger();
  res.hint_faults = ctx_.counters.minor_faults;
  res.shadow_reclaimed = ctx_.shadows.reclaimed_total();
  res.frames_conserved = ctx_.mem.frames_conserved();
  return res;
}

}  // namespace

RunResult run_simulation(const SimConfig& cfg) {
  cfg.scenario.validate(cfg.fast.capacity_pages, cfg.slow.capacity_pages);
  Engine engine(cfg);
  return engine.run();
}

}  // namespace tierlab
