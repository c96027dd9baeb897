#pragma once

// Transactional page migration: copy a slow-tier page while it stays mapped,
// then commit only if the page stayed clean while it was being copied.

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "tierlab/access_tracking.hpp"
#include "tierlab/mem_model.hpp"
#include "tierlab/shadowing.hpp"

namespace tierlab {

enum class TxnState : std::uint8_t { Pending, DirtyCleared, Copying, Checking, Committed, Aborted };

std::string_view to_string(TxnState s);

struct MigrationTransaction {
  PageId page = 0;
  TxnState state = TxnState::Pending;
  FrameId src_frame;
  std::optional<FrameId> dst_frame;
  Cycles start_cycle = 0;
  Cycles copy_done_cycle = 0;
  std::uint64_t copied_version = 0;
  std::vector<TxnState> trace;

  void advance(TxnState next);
};

struct TpmConfig {
  std::uint32_t kpromote_budget = 64;  // transactions per slice
  std::uint32_t max_backoff_rounds = 8;
};

// PCQ: pages that hint-faulted but are not yet both active and accessed.
// MPQ: pages waiting for kpromote. Retries sit in `deferred` until their round.
class PromotionQueues {
 public:
  explicit PromotionQueues(std::size_t page_count);

  bool push_pcq(PageId p);
  void push_mpq(PageId p);
  void push_mpq_front(PageId p);
  std::optional<PageId> pop_mpq();
  void defer(PageId p, std::uint64_t ready_round);
  // Moves retries whose round has come to the MPQ tail.
  std::size_t release(std::uint64_t round);

  bool in_pcq(PageId p) const { return in_pcq_[p] != 0; }
  bool in_mpq(PageId p) const { return in_mpq_[p] != 0; }
  bool queued(PageId p) const { return in_pcq_[p] || in_mpq_[p]; }
  std::size_t pcq_size() const { return pcq_.size(); }
  std::size_t mpq_size() const { return mpq_.size(); }
  std::size_t deferred_size() const { return deferred_.size(); }

  // Drops PCQ pages for which drop(p) holds and moves those for which move(p)
  // holds to the MPQ. Returns the number moved.
  template <class Drop, class Move>
  std::size_t scan_pcq(Drop drop, Move move) {
    std::size_t moved = 0;
    std::size_t out = 0;
    for (std::size_t i = 0; i < pcq_.size(); ++i) {
      const PageId p = pcq_[i];
      if (drop(p)) {
        in_pcq_[p] = 0;
      } else if (move(p)) {
        in_pcq_[p] = 0;
        push_mpq(p);
        ++moved;
      } else {
        pcq_[out++] = p;
      }
    }
    pcq_.resize(out);
    return moved;
  }

 private:
  std::vector<PageId> pcq_;
  std::deque<PageId> mpq_;
  std::deque<std::pair<std::uint64_t, PageId>> deferred_;
  std::vector<std::uint8_t> in_pcq_;
  std::vector<std::uint8_t> in_mpq_;
};

enum class BeginStatus { Started, Deferred, Skipped, Synchronous };

struct BeginResult {
  BeginStatus status = BeginStatus::Skipped;
  MigrationTransaction txn;
  Cycles cycles = 0;  // steps 1-3
};

struct FinishResult {
  bool committed = false;
  Cycles cycles = 0;           // steps 4-8
  Cycles unmapped_window = 0;  // time the page was inaccessible
};

struct KpromoteStep {
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;
  std::uint64_t deferred = 0;
  std::uint64_t synchronous = 0;
  Cycles cycles = 0;
};

struct SuccessRatio {
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;

  bool defined() const { return committed + aborted > 0; }
  // "N:1" (committed per abort), "N:0" without aborts, "undefined" when empty.
  std::string format() const;
};

class TransactionalMigrator {
 public:
  TransactionalMigrator(MemorySystem& mem, AccessTracker& tracker, ShadowManager& shadows,
                        TpmConfig cfg = {});

  // Hint fault on a slow page. Returns the cycles the faulting core is charged;
  // a fault on an unprotected page is a no-op costing nothing.
  Cycles on_hint_fault(PageId page, AccessKind kind);

  std::optional<PageId> next_candidate();
  BeginResult begin(PageId page, Cycles now);
  FinishResult finish(MigrationTransaction& txn, Cycles now);
  // Unmap, copy, remap with the page inaccessible throughout (multi-mapped pages).
  Cycles migrate_sync(PageId page);

  // Advances the retry clock by one kpromote round.
  void next_round();
  // Runs up to `budget` transactions back to back with no interleaved accesses.
  KpromoteStep kpromote_step(std::uint32_t budget);

  bool in_flight(PageId page) const { return in_flight_[page] != 0; }
  AccessKind trigger_kind(PageId page) const { return static_cast<AccessKind>(trigger_[page]); }

  PromotionQueues& queues() { return queues_; }
  const PromotionQueues& queues() const { return queues_; }
  const TpmConfig& config() const { return cfg_; }
  SuccessRatio ratio() const { return {committed_, aborted_}; }
  std::uint64_t committed() const { return committed_; }
  std::uint64_t aborted() const { return aborted_; }
  std::uint64_t hint_faults() const { return hint_faults_; }
  std::uint64_t spurious_faults() const { return spurious_; }
  std::uint64_t round() const { return round_; }

 private:
  void retry_later(PageId page);
  bool eligible(PageId page) const;

  MemorySystem& mem_;
  AccessTracker& tracker_;
  ShadowManager& shadows_;
  TpmConfig cfg_;
  PromotionQueues queues_;
  std::vector<std::uint8_t> in_flight_;
  std::vector<std::uint8_t> attempts_;
  std::vector<std::uint8_t> trigger_;
  std::uint64_t round_ = 0;
  std::uint64_t committed_ = 0;
  std::uint64_t aborted_ = 0;
  std::uint64_t hint_faults_ = 0;
  std::uint64_t spurious_ = 0;
};

}  // namespace tierlab
