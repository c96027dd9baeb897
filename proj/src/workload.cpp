#include "tierlab/workload.hpp"

#include <algorithm>
#include <cmath>

namespace tierlab {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ZipfDistribution::ZipfDistribution(std::uint64_t rank_count, double skew) : skew_(skew) {
  if (rank_count == 0) raise(ErrorCode::ConfigError, "zipf rank_count must be >= 1");
  if (skew < 0.0) raise(ErrorCode::ConfigError, "zipf skew must be >= 0");
  cdf_.resize(rank_count);
  double acc = 0.0;
  for (std::uint64_t r = 1; r <= rank_count; ++r) {
    acc += std::pow(static_cast<double>(r), -skew);
    cdf_[r - 1] = acc;
  }
  for (auto& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::uint64_t ZipfDistribution::sample(Rng& rng) const {
  const double u = rng.uniform01();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::uint64_t>(it - cdf_.begin()) + 1;
}

double ZipfDistribution::pmf(std::uint64_t rank) const {
  if (rank == 0 || rank > cdf_.size()) return 0.0;
  return rank == 1 ? cdf_[0] : cdf_[rank - 1] - cdf_[rank - 2];
}

std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Small: return "small";
    case ScenarioKind::Medium: return "medium";
    case ScenarioKind::Large: return "large";
    case ScenarioKind::BlockChase: return "block_chase";
    case ScenarioKind::SequentialScan: return "sequential_scan";
  }
  return "?";
}

std::optional<ScenarioKind> parse_scenario_kind(std::string_view s) {
  for (auto k : {ScenarioKind::Small, ScenarioKind::Medium, ScenarioKind::Large,
                 ScenarioKind::BlockChase, ScenarioKind::SequentialScan}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::uint64_t Scenario::placed(Tier t) const {
  std::uint64_t n = 0;
  for (const auto& r : placement)
    if (r.tier == t) n += r.count;
  return n;
}

void Scenario::validate(std::uint64_t fast_capacity, std::uint64_t slow_capacity) const {
  if (wss_pages == 0) raise(ErrorCode::ConfigError, "scenario.wss_pages must be > 0");
  if (wss_pages > rss_pages) raise(ErrorCode::ConfigError, "scenario: wss_pages must not exceed rss_pages");
  if (wss_first + wss_pages > rss_pages)
    raise(ErrorCode::ConfigError, "scenario: working set extends past rss_pages");
  if (!(read_fraction >= 0.0 && read_fraction <= 1.0))
    raise(ErrorCode::ConfigError, "scenario.read_fraction must be in [0, 1]");
  std::vector<std::uint8_t> covered(rss_pages, 0);
  for (const auto& r : placement) {
    if (r.first + r.count > rss_pages)
      raise(ErrorCode::ConfigError, "scenario: placement range beyond rss_pages");
    for (std::uint64_t i = 0; i < r.count; ++i) {
      if (covered[r.first + i]++) raise(ErrorCode::ConfigError, "scenario: overlapping placement");
    }
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end())
    raise(ErrorCode::ConfigError, "scenario: placement must cover exactly rss_pages");
  if (placed(Tier::Fast) + reserved_fast_pages > fast_capacity)
    raise(ErrorCode::ConfigError, "scenario: fast-tier placement exceeds memory.fast_pages");
  if (placed(Tier::Slow) > slow_capacity)
    raise(ErrorCode::ConfigError, "scenario: slow-tier placement exceeds memory.slow_pages");
  if (duration == 0) raise(ErrorCode::ConfigError, "scenario.duration must be > 0");
}

std::uint64_t unit_pages(std::uint64_t scale) {
  if (scale == 0) raise(ErrorCode::ConfigError, "scenario.scale must be >= 1");
  return std::max<std::uint64_t>(1, (std::uint64_t{1} << 20) / scale);
}

std::uint64_t units_to_pages(double units, std::uint64_t scale) {
  return static_cast<std::uint64_t>(std::llround(units * static_cast<double>(unit_pages(scale))));
}

namespace {

void place(Scenario& s, std::uint64_t& next, std::uint64_t count, Tier tier) {
  if (count == 0) return;
  s.placement.push_back({static_cast<PageId>(next), count, tier});
  next += count;
}

}  // namespace

Scenario build_scenario(ScenarioKind kind, std::uint64_t scale, const ScenarioOptions& opt,
                        std::uint64_t fast_capacity, std::uint64_t slow_capacity) {
  Scenario s;
  s.kind = kind;
  s.scale = scale;
  s.read_fraction = opt.read_fraction;
  s.duration = opt.duration;
  s.seed = opt.seed;
  s.pattern.skew = opt.skew;
  const auto u = [&](double units) { return units_to_pages(units, scale); };
  std::uint64_t next = 0;

  switch (kind) {
    case ScenarioKind::Small: {
      // 20 units RSS: half is cold filler in fast, the 10-unit WSS splits 6:4.
      const auto cold = u(10);
      place(s, next, cold, Tier::Fast);
      s.wss_first = static_cast<PageId>(next);
      place(s, next, u(6), Tier::Fast);
      place(s, next, u(4), Tier::Slow);
      s.wss_pages = u(10);
      break;
    }
    case ScenarioKind::Medium: {
      // 27 units RSS, 13.5 WSS. A 3.5-unit pinned kernel reserve sits in fast,
      // which pushes 3.5 units of the cold filler to slow.
      s.reserved_fast_pages = u(3.5);
      place(s, next, u(10), Tier::Fast);
      place(s, next, u(3.5), Tier::Slow);
      s.wss_first = static_cast<PageId>(next);
      place(s, next, u(2.5), Tier::Fast);
      place(s, next, u(11), Tier::Slow);
      s.wss_pages = u(13.5);
      break;
    }
    case ScenarioKind::Large: {
      place(s, next, u(16), Tier::Fast);
      place(s, next, u(11), Tier::Slow);
      s.wss_first = 0;
      s.wss_pages = u(27);
      break;
    }
    case ScenarioKind::BlockChase: {
      const auto block = opt.block_pages.value_or(u(1));
      const auto total = block * opt.blocks;
      const auto fast = std::min(total, fast_capacity);
      place(s, next, fast, Tier::Fast);
      place(s, next, total - fast, Tier::Slow);
      s.wss_first = 0;
      s.wss_pages = total;
      s.pattern.kind = PatternKind::BlockChase;
      s.pattern.block_pages = block;
      s.pattern.blocks = opt.blocks;
      break;
    }
    case ScenarioKind::SequentialScan: {
      const auto rss = opt.rss_pages.value_or(u(23));
      const auto fast = std::min(rss, fast_capacity);
      place(s, next, fast, Tier::Fast);
      place(s, next, rss - fast, Tier::Slow);
      s.wss_first = 0;
      s.wss_pages = rss;
      s.pattern.kind = PatternKind::Sequential;
      break;
    }
  }
  s.rss_pages = next;

  Rng perm_rng(derive_seed(s.seed, 0x5eed));
  if (s.pattern.kind == PatternKind::Zipfian) {
    s.rank_to_page.resize(s.wss_pages);
    for (std::uint64_t i = 0; i < s.wss_pages; ++i)
      s.rank_to_page[i] = static_cast<PageId>(s.wss_first + i);
    shuffle(s.rank_to_page, perm_rng);
  } else if (s.pattern.kind == PatternKind::BlockChase) {
    s.rank_to_page.resize(s.pattern.blocks);
    for (std::uint64_t i = 0; i < s.pattern.blocks; ++i) s.rank_to_page[i] = static_cast<PageId>(i);
    shuffle(s.rank_to_page, perm_rng);
  }
  s.validate(fast_capacity, slow_capacity);
  return s;
}

// --- Workload ---------------------------------------------------------------

Workload::Workload(const Scenario& scenario, std::uint32_t cores)
    : scenario_(scenario), cores_(cores) {
  if (cores == 0) raise(ErrorCode::ConfigError, "memory.cores must be >= 1");
  const auto& p = scenario_.pattern;
  if (p.kind == PatternKind::Zipfian)
    zipf_ = std::make_unique<ZipfDistribution>(scenario_.wss_pages, p.skew);
  else if (p.kind == PatternKind::BlockChase)
    zipf_ = std::make_unique<ZipfDistribution>(p.blocks, p.skew);
  states_.reserve(cores);
  for (CoreId c = 0; c < cores; ++c) {
    states_.push_back(CoreState{Rng(derive_seed(scenario_.seed, 1000 + c)), 0, 0, {}});
    auto& st = states_.back();
    if (p.kind == PatternKind::BlockChase) {
      st.lines.resize(p.block_pages * kLinesPerPage);
      for (std::size_t i = 0; i < st.lines.size(); ++i) st.lines[i] = static_cast<std::uint32_t>(i);
      next_block(st);
    } else if (p.kind == PatternKind::Sequential) {
      st.cursor = scenario_.wss_pages * c / cores;
    }
  }
}

void Workload::next_block(CoreState& st) {
  const auto rank = zipf_->sample(st.rng);
  st.block = scenario_.rank_to_page[rank - 1];
  shuffle(st.lines, st.rng);
  st.cursor = 0;
}

AccessEvent Workload::next(CoreId core) {
  auto& st = states_.at(core);
  AccessEvent ev;
  ev.core = core;
  const auto& p = scenario_.pattern;
  switch (p.kind) {
    case PatternKind::Zipfian:
      ev.page = scenario_.rank_to_page[zipf_->sample(st.rng) - 1];
      break;
    case PatternKind::BlockChase: {
      if (st.cursor == st.lines.size()) next_block(st);
      const auto line = st.lines[st.cursor++];
      ev.page = static_cast<PageId>(scenario_.wss_first + st.block * p.block_pages + line / kLinesPerPage);
      break;
    }
    case PatternKind::Sequential: {
      const auto lo = scenario_.wss_pages * core / cores_;
      const auto hi = scenario_.wss_pages * (core + 1) / cores_;
      ev.page = static_cast<PageId>(scenario_.wss_first + st.cursor);
      if (++st.cursor >= hi) st.cursor = lo;
      break;
    }
  }
  const bool read = scenario_.read_fraction >= 1.0 ||
                    (scenario_.read_fraction > 0.0 && st.rng.uniform01() < scenario_.read_fraction);
  ev.kind = read ? AccessKind::Read : AccessKind::Write;
  return ev;
}

}  // namespace tierlab
