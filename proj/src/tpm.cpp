#include "tierlab/tpm.hpp"

#include <algorithm>
#include <cstdio>

namespace tierlab {

std::string_view to_string(TxnState s) {
  switch (s) {
    case TxnState::Pending: return "Pending";
    case TxnState::DirtyCleared: return "DirtyCleared";
    case TxnState::Copying: return "Copying";
    case TxnState::Checking: return "Checking";
    case TxnState::Committed: return "Committed";
    case TxnState::Aborted: return "Aborted";
  }
  return "?";
}

void MigrationTransaction::advance(TxnState next) {
  const bool ok = (state == TxnState::Pending && next == TxnState::DirtyCleared) ||
                  (state == TxnState::DirtyCleared && next == TxnState::Copying) ||
                  (state == TxnState::Copying && next == TxnState::Checking) ||
                  (state == TxnState::Checking &&
                   (next == TxnState::Committed || next == TxnState::Aborted));
  if (!ok)
    raise(ErrorCode::InvariantBreach, std::string("illegal transaction step ") +
                                          std::string(to_string(state)) + " -> " +
                                          std::string(to_string(next)));
  if (trace.empty()) trace.push_back(state);
  state = next;
  trace.push_back(next);
}

std::string SuccessRatio::format() const {
  if (!defined()) return "undefined";
  if (aborted == 0) return std::to_string(committed) + ":0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f:1",
                static_cast<double>(committed) / static_cast<double>(aborted));
  return buf;
}

// --- PromotionQueues --------------------------------------------------------

PromotionQueues::PromotionQueues(std::size_t page_count)
    : in_pcq_(page_count, 0), in_mpq_(page_count, 0) {}

bool PromotionQueues::push_pcq(PageId p) {
  if (in_pcq_[p] || in_mpq_[p]) return false;
  pcq_.push_back(p);
  in_pcq_[p] = 1;
  return true;
}

void PromotionQueues::push_mpq(PageId p) {
  if (in_mpq_[p]) return;
  mpq_.push_back(p);
  in_mpq_[p] = 1;
}

void PromotionQueues::push_mpq_front(PageId p) {
  if (in_mpq_[p]) return;
  mpq_.push_front(p);
  in_mpq_[p] = 1;
}

std::optional<PageId> PromotionQueues::pop_mpq() {
  if (mpq_.empty()) return std::nullopt;
  const PageId p = mpq_.front();
  mpq_.pop_front();
  in_mpq_[p] = 0;
  return p;
}

void PromotionQueues::defer(PageId p, std::uint64_t ready_round) {
  // Deferred pages count as MPQ members so faults do not queue them twice.
  in_mpq_[p] = 1;
  auto it = std::upper_bound(
      deferred_.begin(), deferred_.end(), ready_round,
      [](std::uint64_t r, const std::pair<std::uint64_t, PageId>& e) { return r < e.first; });
  deferred_.insert(it, {ready_round, p});
}

std::size_t PromotionQueues::release(std::uint64_t round) {
  std::size_t n = 0;
  while (!deferred_.empty() && deferred_.front().first <= round) {
    const PageId p = deferred_.front().second;
    deferred_.pop_front();
    mpq_.push_back(p);
    ++n;
  }
  return n;
}

// --- TransactionalMigrator --------------------------------------------------

TransactionalMigrator::TransactionalMigrator(MemorySystem& mem, AccessTracker& tracker,
                                             ShadowManager& shadows, TpmConfig cfg)
    : mem_(mem),
      tracker_(tracker),
      shadows_(shadows),
      cfg_(cfg),
      queues_(mem.page_count()),
      in_flight_(mem.page_count(), 0),
      attempts_(mem.page_count(), 0),
      trigger_(mem.page_count(), static_cast<std::uint8_t>(AccessKind::Read)) {}

bool TransactionalMigrator::eligible(PageId page) const {
  const auto& e = mem_.pte(page);
  return e.present && e.tier == Tier::Slow && !in_flight_[page];
}

Cycles TransactionalMigrator::on_hint_fault(PageId page, AccessKind kind) {
  auto& e = mem_.entry(page);
  if (!e.hint_armed) {
    ++spurious_;
    return 0;
  }
  ++hint_faults_;
  const auto& costs = mem_.costs();
  Cycles c = costs.minor_fault_cost;
  mem_.ledger().add(CostCategory::MinorFault, costs.minor_fault_cost);
  mem_.disarm_protection(page);
  trigger_[page] = static_cast<std::uint8_t>(kind);
  if (e.tier != Tier::Slow) return c;

  if (!in_flight_[page] && queues_.push_pcq(page)) {
    c += costs.queue_op_cost;
    mem_.ledger().add(CostCategory::QueueOp, costs.queue_op_cost);
  }
  tracker_.mark_accessed(page);

  const auto moved = queues_.scan_pcq(
      [&](PageId p) { return !eligible(p); },
      [&](PageId p) { return mem_.info(p).active && mem_.pte(p).accessed; });
  c += moved * costs.queue_op_cost;
  if (moved) mem_.ledger().add(CostCategory::QueueOp, moved * costs.queue_op_cost);
  return c;
}

std::optional<PageId> TransactionalMigrator::next_candidate() {
  while (auto p = queues_.pop_mpq()) {
    if (eligible(*p)) return p;
  }
  return std::nullopt;
}

BeginResult TransactionalMigrator::begin(PageId page, Cycles now) {
  BeginResult r;
  if (!eligible(page)) return r;
  if (mem_.pte(page).map_count > 1) {
    r.status = BeginStatus::Synchronous;
    return r;
  }
  auto dst = mem_.allocate_frame(Tier::Fast);
  if (!dst) {
    r.status = BeginStatus::Deferred;
    queues_.push_mpq_front(page);
    return r;
  }
  auto& t = r.txn;
  t.page = page;
  t.src_frame = *mem_.pte(page).mapped_frame;
  t.dst_frame = dst;
  t.start_cycle = now;
  r.cycles += mem_.clear_dirty_and_flush(page);
  t.advance(TxnState::DirtyCleared);
  r.cycles += mem_.copy_page(t.src_frame, *dst);
  t.copied_version = mem_.frame_version(*dst);
  t.advance(TxnState::Copying);
  t.copy_done_cycle = now + r.cycles;
  in_flight_[page] = 1;
  r.status = BeginStatus::Started;
  return r;
}

FinishResult TransactionalMigrator::finish(MigrationTransaction& txn, Cycles /*now*/) {
  FinishResult r;
  txn.advance(TxnState::Checking);
  const PageId page = txn.page;
  const auto unmap = mem_.atomic_unmap(page);
  r.cycles += unmap.cycles;
  if (unmap.old_pte.mapped_frame != txn.src_frame)
    raise(ErrorCode::InvariantBreach, "page moved during its transaction");

  if (unmap.old_pte.dirty) {
    const Cycles restore = mem_.restore(page, unmap.old_pte);
    r.cycles += restore;
    r.unmapped_window = unmap.cycles + restore;
    mem_.free_frame(*txn.dst_frame);
    txn.dst_frame.reset();
    txn.advance(TxnState::Aborted);
    in_flight_[page] = 0;
    ++aborted_;
    retry_later(page);
    return r;
  }

  if (mem_.frame_version(*txn.dst_frame) != mem_.info(page).content_version ||
      txn.copied_version != mem_.info(page).content_version)
    raise(ErrorCode::InvariantBreach, "clean transaction with diverged content");
  const Cycles remap = mem_.remap(page, *txn.dst_frame, unmap.old_pte.writable);
  r.cycles += remap;
  r.unmapped_window = unmap.cycles + remap;
  if (shadows_.enabled()) shadows_.register_shadow(page, *txn.dst_frame, txn.src_frame);
  else mem_.free_frame(txn.src_frame);
  tracker_.on_promoted(page);
  txn.advance(TxnState::Committed);
  in_flight_[page] = 0;
  attempts_[page] = 0;
  ++committed_;
  r.committed = true;
  return r;
}

Cycles TransactionalMigrator::migrate_sync(PageId page) {
  auto dst = mem_.allocate_frame(Tier::Fast);
  if (!dst) return 0;
  const FrameId src = *mem_.pte(page).mapped_frame;
  const auto unmap = mem_.atomic_unmap(page);
  Cycles c = unmap.cycles;
  c += mem_.copy_page(src, *dst);
  c += mem_.remap(page, *dst, unmap.old_pte.writable);
  mem_.entry(page).map_count = unmap.old_pte.map_count;
  mem_.free_frame(src);
  tracker_.on_promoted(page);
  return c;
}

void TransactionalMigrator::retry_later(PageId page) {
  const std::uint32_t shift = std::min<std::uint32_t>(attempts_[page], 3);
  const std::uint64_t wait = std::min<std::uint64_t>(std::uint64_t{1} << shift, cfg_.max_backoff_rounds);
  if (attempts_[page] < 255) ++attempts_[page];
  queues_.defer(page, round_ + wait);
}

void TransactionalMigrator::next_round() {
  ++round_;
  queues_.release(round_);
}

KpromoteStep TransactionalMigrator::kpromote_step(std::uint32_t budget) {
  KpromoteStep s;
  for (std::uint32_t i = 0; i < budget; ++i) {
    const auto page = next_candidate();
    if (!page) break;
    auto b = begin(*page, s.cycles);
    if (b.status == BeginStatus::Deferred) {
      ++s.deferred;
      break;
    }
    if (b.status == BeginStatus::Synchronous) {
      const Cycles c = migrate_sync(*page);
      if (c == 0) {
        queues_.push_mpq_front(*page);
        ++s.deferred;
        break;
      }
      s.cycles += c;
      ++s.synchronous;
      continue;
    }
    if (b.status != BeginStatus::Started) continue;
    s.cycles += b.cycles;
    const auto f = finish(b.txn, s.cycles);
    s.cycles += f.cycles;
    if (f.committed) ++s.committed;
    else ++s.aborted;
  }
  return s;
}

}  // namespace tierlab
