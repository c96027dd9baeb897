#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "tierlab/workload.hpp"

using namespace tierlab;

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(5), b(5), c(6);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
}

TEST_CASE("std::mt19937_64 backs the generator") {
  // first output of the reference engine for seed 5489
  Rng r(5489);
  CHECK(r.next() == 14514284786278117030ULL);
}

TEST_CASE("shuffle is a permutation") {
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  Rng r(1);
  shuffle(v, r);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  CHECK(v != sorted);
}

TEST_CASE("zipf pmf follows the power law") {
  ZipfDistribution z(1000, 0.99);
  double sum = 0;
  for (std::uint64_t r = 1; r <= 1000; ++r) sum += z.pmf(r);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  for (std::uint64_t r : {2, 10, 100, 1000})
    CHECK(z.pmf(1) / z.pmf(r) == doctest::Approx(std::pow(static_cast<double>(r), 0.99)));
  ZipfDistribution flat(10, 0.0);
  CHECK(flat.pmf(3) == doctest::Approx(0.1));
}

TEST_CASE("zipf frequency ratios within three sigma at 1e6 draws") {
  const std::uint64_t n_ranks = 10240;
  const double s = 0.99;
  const std::uint64_t draws = 1'000'000;
  ZipfDistribution z(n_ranks, s);
  Rng rng(2024);
  std::vector<std::uint64_t> count(n_ranks + 1, 0);
  std::uint64_t out_of_range = 0;
  for (std::uint64_t i = 0; i < draws; ++i) {
    const auto r = z.sample(rng);
    if (r < 1 || r > n_ranks) {
      ++out_of_range;
      continue;
    }
    ++count[r];
  }
  REQUIRE(out_of_range == 0);
  // independent normaliser
  double h = 0;
  for (std::uint64_t r = 1; r <= n_ranks; ++r) h += std::pow(static_cast<double>(r), -s);
  const double p1 = 1.0 / h;
  for (std::uint64_t r : {2, 5, 10, 50, 100}) {
    CAPTURE(r);
    const double pr = std::pow(static_cast<double>(r), -s) / h;
    const double n = static_cast<double>(draws);
    // delta method for log(c1/cr) under a multinomial
    const double sigma = std::sqrt((1 - p1) / (n * p1) + (1 - pr) / (n * pr) + 2.0 / n);
    const double observed = std::log(static_cast<double>(count[1]) / static_cast<double>(count[r]));
    CHECK(std::abs(observed - s * std::log(static_cast<double>(r))) < 3 * sigma);
  }
}

TEST_CASE("scenario layouts at scale 1024") {
  const std::uint64_t cap = 16384;
  ScenarioOptions opt;
  const auto small = build_scenario(ScenarioKind::Small, 1024, opt, cap, cap);
  CHECK(unit_pages(1024) == 1024);
  CHECK(small.rss_pages == 20480);
  CHECK(small.wss_pages == 10240);
  CHECK(small.wss_first == 10240);
  CHECK(small.placed(Tier::Fast) == 16384);
  CHECK(small.placed(Tier::Slow) == 4096);

  const auto med = build_scenario(ScenarioKind::Medium, 1024, opt, cap, cap);
  CHECK(med.rss_pages == 27648);
  CHECK(med.wss_pages == 13824);
  CHECK(med.reserved_fast_pages == 3584);
  CHECK(med.placed(Tier::Fast) + med.reserved_fast_pages == 16384);
  CHECK(med.placed(Tier::Slow) == 14848);

  const auto large = build_scenario(ScenarioKind::Large, 1024, opt, cap, cap);
  CHECK(large.rss_pages == 27648);
  CHECK(large.wss_pages == large.rss_pages);
  CHECK(large.placed(Tier::Fast) == cap);  // fast tier fully populated
  CHECK(large.placed(Tier::Slow) == 11264);

  const auto bc = build_scenario(ScenarioKind::BlockChase, 1024, opt, cap, cap);
  CHECK(bc.wss_pages == 24 * 1024);
  CHECK(bc.wss_pages > cap);

  for (const auto* s : {&small, &med, &large}) {
    std::set<PageId> seen(s->rank_to_page.begin(), s->rank_to_page.end());
    CHECK(seen.size() == s->wss_pages);
    CHECK(*seen.begin() == s->wss_first);
    CHECK(*seen.rbegin() == s->wss_first + s->wss_pages - 1);
  }
}

TEST_CASE("placement that does not fit is rejected by name") {
  ScenarioOptions opt;
  try {
    build_scenario(ScenarioKind::Large, 1024, opt, 16384, 8192);
    FAIL("expected a config error");
  } catch (const SimError& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(std::string(e.what()).find("slow") != std::string::npos);
  }
  Scenario s = build_scenario(ScenarioKind::Small, 1024, opt, 16384, 16384);
  s.wss_pages = s.rss_pages + 1;
  CHECK_THROWS_WITH_AS(s.validate(16384, 16384), doctest::Contains("wss_pages"), SimError);
}

TEST_CASE("block chase visits every line of a block once per pass") {
  ScenarioOptions opt;
  opt.blocks = 1;
  opt.block_pages = 4;
  const auto s = build_scenario(ScenarioKind::BlockChase, 1024, opt, 64, 64);
  Workload w(s, 1);
  std::map<PageId, int> hits;
  for (int i = 0; i < 256; ++i) ++hits[w.next(0).page];
  CHECK(hits.size() == 4);
  for (const auto& [p, n] : hits) CHECK(n == 64);
}

TEST_CASE("read fraction extremes") {
  ScenarioOptions opt;
  opt.read_fraction = 0.0;
  auto s = build_scenario(ScenarioKind::Small, 1024, opt, 16384, 16384);
  Workload w(s, 2);
  for (int i = 0; i < 1000; ++i) CHECK(w.next(i % 2).kind == AccessKind::Write);
  s.read_fraction = 1.0;
  Workload r(s, 2);
  for (int i = 0; i < 1000; ++i) CHECK(r.next(i % 2).kind == AccessKind::Read);
}

TEST_CASE("a core's stream does not depend on the others") {
  ScenarioOptions opt;
  opt.read_fraction = 0.5;
  opt.seed = 11;
  const auto s = build_scenario(ScenarioKind::Medium, 1024, opt, 16384, 16384);
  Workload a(s, 4), b(s, 4);
  for (int i = 0; i < 500; ++i) a.next(0);  // advance core 0 only in a
  for (int i = 0; i < 500; ++i) {
    const auto x = a.next(3), y = b.next(3);
    CHECK(x.page == y.page);
    CHECK(x.kind == y.kind);
  }
}

TEST_CASE("sequential scan partitions the range between cores") {
  ScenarioOptions opt;
  opt.rss_pages = 100;
  const auto s = build_scenario(ScenarioKind::SequentialScan, 1024, opt, 64, 64);
  CHECK(s.placed(Tier::Fast) == 64);
  CHECK(s.placed(Tier::Slow) == 36);
  Workload w(s, 4);
  std::vector<PageId> core1;
  for (int i = 0; i < 30; ++i) core1.push_back(w.next(1).page);
  CHECK(core1.front() == 25);
  CHECK(core1[24] == 49);
  CHECK(core1[25] == 25);
}
