#pragma once

// Synthetic workloads and initial placements: Zipfian over a working set,
// block-chase over fixed-size blocks and a per-core sequential scan.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tierlab/types.hpp"

namespace tierlab {

// mt19937_64 with hand-rolled reductions so streams are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  double uniform01();
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

// Independent stream seed for (seed, stream) via splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

class ZipfDistribution {
 public:
  ZipfDistribution(std::uint64_t rank_count, double skew);
  // Rank in [1, rank_count] with P(r) proportional to 1/r^skew.
  std::uint64_t sample(Rng& rng) const;
  double pmf(std::uint64_t rank) const;
  std::uint64_t size() const { return cdf_.size(); }
  double skew() const { return skew_; }

 private:
  double skew_;
  std::vector<double> cdf_;
};

enum class ScenarioKind { Small, Medium, Large, BlockChase, SequentialScan };
enum class PatternKind { Zipfian, BlockChase, Sequential };

std::string_view to_string(ScenarioKind k);
std::optional<ScenarioKind> parse_scenario_kind(std::string_view s);

struct Pattern {
  PatternKind kind = PatternKind::Zipfian;
  double skew = 0.99;
  std::uint64_t block_pages = 0;  // block-chase only
  std::uint64_t blocks = 0;
};

struct PlacementRange {
  PageId first = 0;
  std::uint64_t count = 0;
  Tier tier = Tier::Fast;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::Small;
  std::uint64_t scale = 1024;
  std::uint64_t rss_pages = 0;
  std::uint64_t wss_pages = 0;
  PageId wss_first = 0;
  std::vector<PlacementRange> placement;
  std::uint64_t reserved_fast_pages = 0;
  double read_fraction = 1.0;
  Pattern pattern;
  std::uint64_t duration = 0;  // accesses, all cores together
  std::uint64_t seed = 0;
  // Zipf rank r (1-based) maps to rank_to_page[r-1]; for block-chase the
  // entries are block indices.
  std::vector<PageId> rank_to_page;

  std::uint64_t placed(Tier t) const;
  bool in_wss(PageId p) const { return p >= wss_first && p < wss_first + wss_pages; }
  void validate(std::uint64_t fast_capacity, std::uint64_t slow_capacity) const;
};

struct ScenarioOptions {
  double read_fraction = 1.0;
  double skew = 0.99;
  std::uint64_t duration = 1'000'000;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> rss_pages;  // sequential scan
  std::uint64_t blocks = 24;               // block chase
  std::optional<std::uint64_t> block_pages;
};

// One "GB unit" of the full-size layouts at the given scale divisor.
std::uint64_t unit_pages(std::uint64_t scale);
std::uint64_t units_to_pages(double units, std::uint64_t scale);

Scenario build_scenario(ScenarioKind kind, std::uint64_t scale, const ScenarioOptions& opt,
                        std::uint64_t fast_capacity, std::uint64_t slow_capacity);

struct AccessEvent {
  PageId page = 0;
  AccessKind kind = AccessKind::Read;
  CoreId core = 0;
};

// Per-core access streams over one scenario. Core c's stream depends only on
// (scenario.seed, c).
class Workload {
 public:
  Workload(const Scenario& scenario, std::uint32_t cores);

  AccessEvent next(CoreId core);
  const Scenario& scenario() const { return scenario_; }

 private:
  struct CoreState {
    Rng rng;
    std::uint64_t cursor = 0;
    std::uint64_t block = 0;
    std::vector<std::uint32_t> lines;  // block-chase permutation of line slots
  };

  void next_block(CoreState& st);

  Scenario scenario_;
  std::uint32_t cores_;
  std::unique_ptr<ZipfDistribution> zipf_;
  std::vector<CoreState> states_;
};

}  // namespace tierlab
