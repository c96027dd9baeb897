#include "tierlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace tierlab {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { raise(ErrorCode::ConfigError, msg); }

// Reads one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json* obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (obj_ && !obj_->is_object()) config_error("key '" + name() + "' must be an object");
  }

  std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }
  bool has(const std::string& k) {
    if (!obj_ || !obj_->contains(k)) return false;
    used_.insert(k);
    return true;
  }
  const json& at(const std::string& k) {
    used_.insert(k);
    return obj_->at(k);
  }

  std::uint64_t u64(const std::string& k, std::uint64_t def) {
    if (!has(k)) return def;
    const auto& v = at(k);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    if (v.is_number_float() && v.get<double>() >= 0 && v.get<double>() == std::floor(v.get<double>()))
      return static_cast<std::uint64_t>(v.get<double>());
    config_error("key '" + key(k) + "' must be a non-negative integer");
  }
  double dbl(const std::string& k, double def) {
    if (!has(k)) return def;
    const auto& v = at(k);
    if (!v.is_number()) config_error("key '" + key(k) + "' must be a number");
    return v.get<double>();
  }
  std::string str(const std::string& k, const std::string& def) {
    if (!has(k)) return def;
    const auto& v = at(k);
    if (!v.is_string()) config_error("key '" + key(k) + "' must be a string");
    return v.get<std::string>();
  }
  Section sub(const std::string& k) {
    if (!has(k)) return Section(nullptr, key(k));
    return Section(&at(k), key(k));
  }
  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!used_.count(k)) config_error("unknown key '" + key(k) + "'");
    }
  }

 private:
  std::string name() const { return prefix_.empty() ? "<root>" : prefix_; }

  const json* obj_;
  std::string prefix_;
  std::set<std::string> used_;
};

std::string fmt_double(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) raise(ErrorCode::ConfigError, "cannot write " + p.string());
  f << content;
}

}  // namespace

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::ConfigError, "cannot read config file '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ConfigError, "'" + path + "' is not valid JSON: " + e.what());
  }
}

std::uint64_t parse_size_bytes(const std::string& text, const std::string& key) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    config_error("key '" + key + "': cannot parse size '" + text + "'");
  }
  const std::string unit = text.substr(pos);
  std::uint64_t mult = 0;
  if (unit == "B" || unit.empty()) mult = 1;
  else if (unit == "KiB") mult = 1ULL << 10;
  else if (unit == "MiB") mult = 1ULL << 20;
  else if (unit == "GiB") mult = 1ULL << 30;
  else if (unit == "TiB") mult = 1ULL << 40;
  else config_error("key '" + key + "': unknown size unit '" + unit + "'");
  if (value < 0) config_error("key '" + key + "': size must be non-negative");
  return static_cast<std::uint64_t>(std::llround(value * static_cast<double>(mult)));
}

std::uint64_t parse_pages(const json& v, const std::string& key) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))
    return v.get<std::uint64_t>();
  if (!v.is_string()) config_error("key '" + key + "' must be a page count or \"<size>@<page>\"");
  const auto s = v.get<std::string>();
  const auto at = s.find('@');
  if (at == std::string::npos) config_error("key '" + key + "': expected \"<size>@<page size>\"");
  const auto bytes = parse_size_bytes(s.substr(0, at), key);
  const auto page = parse_size_bytes(s.substr(at + 1), key);
  if (page != kPageSize) config_error("key '" + key + "': only 4KiB pages are modelled");
  if (bytes % page) config_error("key '" + key + "': size is not a whole number of pages");
  return bytes / page;
}

RunConfig parse_run_config(const json& doc) {
  RunConfig rc;
  rc.source = doc;
  Section root(&doc, "");
  auto& sim = rc.sim;

  if (!root.has("seed")) config_error("key 'seed' is required");
  sim.seed = root.u64("seed", 0);
  if (const char* env = std::getenv("TIERLAB_SEED"); env && *env) {
    try {
      sim.seed = std::stoull(env);
    } catch (const std::exception&) {
      config_error("TIERLAB_SEED must be an unsigned integer");
    }
  }

  auto sc = root.sub("scenario");
  if (!sc.has("kind")) config_error("key 'scenario.kind' is required");
  const auto kind_text = sc.str("kind", "");
  const auto kind = parse_scenario_kind(kind_text);
  if (!kind) config_error("key 'scenario.kind': unknown scenario '" + kind_text + "'");
  const auto scale = sc.u64("scale", 1024);
  if (scale == 0) config_error("key 'scenario.scale' must be >= 1");

  auto mem = root.sub("memory");
  const auto fast_pages =
      mem.has("fast_pages") ? parse_pages(mem.at("fast_pages"), "memory.fast_pages") : units_to_pages(16, scale);
  const auto slow_pages =
      mem.has("slow_pages") ? parse_pages(mem.at("slow_pages"), "memory.slow_pages") : units_to_pages(16, scale);
  sim.cores = static_cast<std::uint32_t>(mem.u64("cores", 4));
  if (sim.cores == 0 || sim.cores > TlbDirectory::kMaxCores)
    config_error("key 'memory.cores' must be in [1, 64]");
  if (fast_pages == 0 || slow_pages == 0) config_error("memory tiers must have at least one page");
  mem.finish();

  sim.platform = root.str("platform", "A");
  PlatformProfile prof;
  try {
    prof = platform_profile(sim.platform, fast_pages, slow_pages);
  } catch (const SimError&) {
    config_error("key 'platform': unknown profile '" + sim.platform + "'");
  }
  sim.fast = prof.fast;
  sim.slow = prof.slow;
  sim.costs = prof.costs;

  auto tiers = root.sub("tiers");
  for (auto [name, spec] : {std::pair<const char*, TierSpec*>{"fast", &sim.fast}, {"slow", &sim.slow}}) {
    auto t = tiers.sub(name);
    spec->read_latency = t.u64("read_latency", spec->read_latency);
    spec->write_latency = t.u64("write_latency", spec->write_latency);
    t.finish();
  }
  tiers.finish();

  auto costs = root.sub("costs");
  sim.costs.minor_fault_cost = costs.u64("minor_fault_cost", sim.costs.minor_fault_cost);
  sim.costs.tlb_ipi_cost_per_core = costs.u64("tlb_ipi_cost_per_core", sim.costs.tlb_ipi_cost_per_core);
  sim.costs.page_copy_cost = costs.u64("page_copy_cost", sim.costs.page_copy_cost);
  sim.costs.remap_cost = costs.u64("remap_cost", sim.costs.remap_cost);
  sim.costs.queue_op_cost = costs.u64("queue_op_cost", sim.costs.queue_op_cost);
  costs.finish();
  try {
    sim.fast.validate();
    sim.slow.validate();
    sim.costs.validate();
  } catch (const SimError& e) {
    config_error(std::string("costs/tiers: ") + e.what());
  }
  if (sim.fast.read_latency >= sim.slow.read_latency)
    config_error("tiers: fast read_latency must be below slow read_latency");

  auto pol = root.sub("policy");
  const auto pol_text = pol.str("kind", "nomad");
  const auto pkind = parse_policy_kind(pol_text);
  if (!pkind) config_error("key 'policy.kind': unknown policy '" + pol_text + "'");
  sim.policy.kind = *pkind;
  if (pol.has("cooling_period") && pol.at("cooling_period").is_string()) {
    const auto preset = pol.str("cooling_period", "");
    if (preset == "default") sim.policy.cooling_period = 2'000'000;
    else if (preset == "quickcool") sim.policy.cooling_period = 2'000;
    else config_error("key 'policy.cooling_period': unknown preset '" + preset + "'");
  } else {
    sim.policy.cooling_period = pol.u64("cooling_period", sim.policy.cooling_period);
  }
  sim.policy.sample_prob = pol.dbl("sample_prob", sim.policy.sample_prob);
  if (!(sim.policy.sample_prob > 0.0 && sim.policy.sample_prob <= 1.0))
    config_error("key 'policy.sample_prob' must be in (0, 1]");
  sim.policy.sampling_budget = static_cast<std::uint32_t>(pol.u64("sampling_budget", 32));
  sim.policy.tpp_max_attempts = static_cast<std::uint32_t>(pol.u64("tpp_max_attempts", 10));
  if (sim.policy.tpp_max_attempts == 0) config_error("key 'policy.tpp_max_attempts' must be >= 1");
  pol.finish();

  auto eng = root.sub("sim");
  sim.sim.slice = eng.u64("slice", sim.sim.slice);
  if (sim.sim.slice == 0) config_error("key 'sim.slice' must be > 0");
  sim.sim.aging_budget = eng.u64("aging_budget", sim.sim.aging_budget);
  sim.sim.rearm_period = eng.u64("rearm_period", sim.sim.rearm_period);
  sim.sim.tpm.kpromote_budget = static_cast<std::uint32_t>(eng.u64("kpromote_budget", 64));
  sim.sim.tpm.max_backoff_rounds = static_cast<std::uint32_t>(eng.u64("max_backoff_rounds", 8));
  auto fast_th = PressureThresholds::defaults(fast_pages);
  fast_th.low_water_mark = eng.u64("low_water_mark", fast_th.low_water_mark);
  fast_th.demotion_batch = eng.u64("demotion_batch", fast_th.demotion_batch);
  auto slow_th = PressureThresholds::defaults(slow_pages);
  slow_th.low_water_mark = eng.u64("slow_low_water_mark", slow_th.low_water_mark);
  slow_th.demotion_batch = fast_th.demotion_batch;
  try {
    fast_th.validate(fast_pages);
    slow_th.validate(slow_pages);
  } catch (const SimError& e) {
    config_error(std::string("sim: ") + e.what());
  }
  sim.sim.fast_thresholds = fast_th;
  sim.sim.slow_thresholds = slow_th;
  eng.finish();

  ScenarioOptions opt;
  opt.seed = sim.seed;
  opt.read_fraction = sc.dbl("read_fraction", 1.0);
  if (!(opt.read_fraction >= 0.0 && opt.read_fraction <= 1.0))
    config_error("key 'scenario.read_fraction' must be in [0, 1]");
  opt.skew = sc.dbl("skew", 0.99);
  if (opt.skew < 0.0) config_error("key 'scenario.skew' must be >= 0");
  opt.duration = sc.u64("duration", 1'000'000);
  if (opt.duration == 0) config_error("key 'scenario.duration' must be > 0");
  if (sc.has("rss_pages")) opt.rss_pages = parse_pages(sc.at("rss_pages"), "scenario.rss_pages");
  opt.blocks = sc.u64("blocks", opt.blocks);
  if (sc.has("block_pages")) opt.block_pages = parse_pages(sc.at("block_pages"), "scenario.block_pages");
  std::optional<std::uint64_t> wss_override;
  if (sc.has("wss_pages")) wss_override = parse_pages(sc.at("wss_pages"), "scenario.wss_pages");
  sc.finish();
  if (*kind == ScenarioKind::BlockChase && (opt.blocks == 0 || opt.block_pages.value_or(1) == 0))
    config_error("scenario: block chase needs blocks >= 1 and block_pages >= 1");

  sim.scenario = build_scenario(*kind, scale, opt, fast_pages, slow_pages);
  if (wss_override) {
    auto& s = sim.scenario;
    if (s.pattern.kind != PatternKind::Zipfian)
      config_error("key 'scenario.wss_pages' applies to Zipfian scenarios only");
    s.wss_pages = *wss_override;
    if (s.wss_pages > s.rss_pages)
      config_error("scenario: wss_pages (" + std::to_string(s.wss_pages) +
                   ") must not exceed rss_pages (" + std::to_string(s.rss_pages) + ")");
    if (s.wss_first + s.wss_pages > s.rss_pages) s.wss_first = static_cast<PageId>(s.rss_pages - s.wss_pages);
    s.rank_to_page.resize(s.wss_pages);
    for (std::uint64_t i = 0; i < s.wss_pages; ++i) s.rank_to_page[i] = static_cast<PageId>(s.wss_first + i);
    Rng perm(derive_seed(s.seed, 0x5eed));
    shuffle(s.rank_to_page, perm);
    s.validate(fast_pages, slow_pages);
  }

  sim.snapshot_interval = root.u64("snapshot_interval", 1'000'000);
  if (sim.snapshot_interval == 0) config_error("key 'snapshot_interval' must be > 0");

  auto out = root.sub("output");
  rc.output_dir = out.str("dir", "out");
  sim.trace_path = out.str("trace", "");
  out.finish();
  root.finish();
  return rc;
}

json effective_config(const RunConfig& rc) {
  const auto& c = rc.sim;
  const auto& s = c.scenario;
  json j;
  j["seed"] = c.seed;
  j["platform"] = c.platform;
  j["scenario"] = {{"kind", to_string(s.kind)},      {"scale", s.scale},
                   {"rss_pages", s.rss_pages},       {"wss_pages", s.wss_pages},
                   {"wss_first", s.wss_first},       {"reserved_fast_pages", s.reserved_fast_pages},
                   {"read_fraction", s.read_fraction}, {"skew", s.pattern.skew},
                   {"duration", s.duration},         {"fast_placed", s.placed(Tier::Fast)},
                   {"slow_placed", s.placed(Tier::Slow)}};
  if (s.pattern.kind == PatternKind::BlockChase) {
    j["scenario"]["blocks"] = s.pattern.blocks;
    j["scenario"]["block_pages"] = s.pattern.block_pages;
  }
  j["memory"] = {{"fast_pages", c.fast.capacity_pages}, {"slow_pages", c.slow.capacity_pages},
                 {"cores", c.cores}};
  j["tiers"] = {{"fast", {{"read_latency", c.fast.read_latency}, {"write_latency", c.fast.write_latency}}},
                {"slow", {{"read_latency", c.slow.read_latency}, {"write_latency", c.slow.write_latency}}}};
  j["costs"] = {{"minor_fault_cost", c.costs.minor_fault_cost},
                {"tlb_ipi_cost_per_core", c.costs.tlb_ipi_cost_per_core},
                {"page_copy_cost", c.costs.page_copy_cost},
                {"remap_cost", c.costs.remap_cost},
                {"queue_op_cost", c.costs.queue_op_cost}};
  j["policy"] = {{"kind", to_string(c.policy.kind)},
                 {"cooling_period", c.policy.cooling_period},
                 {"sample_prob", c.policy.sample_prob},
                 {"sampling_budget", c.policy.sampling_budget},
                 {"tpp_max_attempts", c.policy.tpp_max_attempts}};
  const auto fth = c.sim.fast_thresholds.value_or(PressureThresholds::defaults(c.fast.capacity_pages));
  const auto sth = c.sim.slow_thresholds.value_or(PressureThresholds::defaults(c.slow.capacity_pages));
  j["sim"] = {{"slice", c.sim.slice},
              {"aging_budget", c.sim.aging_budget},
              {"rearm_period", c.sim.rearm_period},
              {"kpromote_budget", c.sim.tpm.kpromote_budget},
              {"max_backoff_rounds", c.sim.tpm.max_backoff_rounds},
              {"low_water_mark", fth.low_water_mark},
              {"demotion_batch", fth.demotion_batch},
              {"slow_low_water_mark", sth.low_water_mark}};
  j["snapshot_interval"] = c.snapshot_interval;
  return j;
}

json snapshot_json(const MetricsSnapshot& s) {
  json j = {{"cycle", s.cycle},
            {"promotions", {{"read", s.promotions_read}, {"write", s.promotions_write}}},
            {"demotions", {{"remap", s.demotions_remap}, {"copy", s.demotions_copy}}},
            {"demotion_cycles", {{"remap", s.demotion_cycles_remap}, {"copy", s.demotion_cycles_copy}}},
            {"tpm_committed", s.tpm_committed},
            {"tpm_aborted", s.tpm_aborted},
            {"minor_faults", s.minor_faults},
            {"shadow_faults", s.shadow_faults},
            {"access_errors", s.access_errors},
            {"shadow_pages", s.shadow_pages},
            {"fast_free", s.fast_free},
            {"wss_fast_resident", s.wss_fast_resident},
            {"access_count", s.access_count},
            {"total_access_cycles", s.total_access_cycles},
            {"stall_cycles",
             {{"latency", s.latency_cycles},
              {"fault", s.fault_stall},
              {"migration", s.migration_stall},
              {"blocked", s.blocked_stall}}},
            {"mean_access_cycles", s.mean_access_cycles()},
            {"throughput_proxy", s.throughput_proxy}};
  return j;
}

json make_report(const RunConfig& rc, const RunResult& r, const std::string& timestamp) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["timestamp"] = timestamp;
  j["config"] = effective_config(rc);
  j["status"] = r.oom ? "oom" : "ok";
  j["error"] = r.error;
  const auto& p = r.phases;
  j["phases"] = {{"transient_end_cycle", p.transient_end_cycle},
                 {"run_end_cycle", p.run_end_cycle},
                 {"stable_detected", p.stable_detected},
                 {"thrashing", p.thrashing},
                 {"detector", {{"tolerance", kStableTolerance}, {"windows", kStableWindows}}},
                 {"transient", snapshot_json(p.transient)},
                 {"stable", snapshot_json(p.stable)},
                 {"total", snapshot_json(p.total)}};
  j["success_ratio"] = r.ratio.format();
  const auto& k = r.counters;
  j["counters"] = {{"sync_promotions", k.sync_promotions},
                   {"tpp_gave_up", k.tpp_gave_up},
                   {"tpp_max_attempts_seen", k.tpp_max_attempts_seen},
                   {"shadow_reclaimed", r.shadow_reclaimed},
                   {"tpm_unmapped_window_cycles", k.tpm_unmapped_window},
                   {"sync_unmapped_window_cycles", k.sync_unmapped_window}};
  json ledger;
  for (std::size_t c = 0; c < static_cast<std::size_t>(CostCategory::Count); ++c) {
    const auto cat = static_cast<CostCategory>(c);
    ledger[std::string(to_string(cat))] = r.ledger.get(cat);
  }
  j["ledger"] = ledger;
  j["accounting"] = {{"core_finish", r.core_finish},
                     {"core_cycles_total", r.core_busy_total},
                     {"total_access_cycles", p.total.total_access_cycles},
                     {"closed", r.oom || r.core_busy_total == p.total.total_access_cycles}};
  j["integrity_violations"] = r.integrity_violations;
  j["frames_conserved"] = r.frames_conserved;
  j["snapshot_count"] = r.snapshots.size();
  return j;
}

std::string snapshots_csv(const RunResult& r) {
  std::ostringstream o;
  o << "schema_version,cycle,promotions_read,promotions_write,demotions_remap,demotions_copy,"
       "tpm_committed,tpm_aborted,minor_faults,shadow_faults,shadow_pages,fast_free,"
       "wss_fast_resident,access_count,total_access_cycles,throughput_proxy\n";
  for (const auto& s : r.snapshots) {
    o << kSchemaVersion << ',' << s.cycle << ',' << s.promotions_read << ',' << s.promotions_write
      << ',' << s.demotions_remap << ',' << s.demotions_copy << ',' << s.tpm_committed << ','
      << s.tpm_aborted << ',' << s.minor_faults << ',' << s.shadow_faults << ',' << s.shadow_pages
      << ',' << s.fast_free << ',' << s.wss_fast_resident << ',' << s.access_count << ','
      << s.total_access_cycles << ',' << fmt_double(s.throughput_proxy) << '\n';
  }
  return o.str();
}

std::string summary_text(const RunConfig& rc, const RunResult& r) {
  const auto& c = rc.sim;
  const auto& p = r.phases;
  std::ostringstream o;
  o << "tierlab run: " << to_string(c.scenario.kind) << " / " << to_string(c.policy.kind)
    << " / platform " << c.platform << " / seed " << c.seed << "\n";
  o << "status: " << (r.oom ? "OUT OF MEMORY (" + r.error + ")" : std::string("ok")) << "\n";
  o << "pages: rss " << c.scenario.rss_pages << ", wss " << c.scenario.wss_pages << ", fast "
    << c.fast.capacity_pages << ", slow " << c.slow.capacity_pages << "\n";
  o << "run end cycle " << p.run_end_cycle << ", transient end cycle " << p.transient_end_cycle
    << (p.stable_detected ? "" : " (no stable phase detected)") << (p.thrashing ? " [thrashing]" : "")
    << "\n\n";
  o << std::left << std::setw(11) << "phase" << std::right << std::setw(12) << "accesses"
    << std::setw(12) << "B/cycle" << std::setw(12) << "promo(r|w)" << std::setw(14) << "demo(rm|cp)"
    << std::setw(12) << "faults" << "\n";
  for (auto [name, s] : {std::pair<const char*, const MetricsSnapshot*>{"transient", &p.transient},
                         {"stable", &p.stable},
                         {"total", &p.total}}) {
    o << std::left << std::setw(11) << name << std::right << std::setw(12) << s->access_count
      << std::setw(12) << fmt_double(s->throughput_proxy, 4) << std::setw(12)
      << (std::to_string(s->promotions_read) + "|" + std::to_string(s->promotions_write))
      << std::setw(14)
      << (std::to_string(s->demotions_remap) + "|" + std::to_string(s->demotions_copy))
      << std::setw(12) << s->minor_faults << "\n";
  }
  o << "\nsuccess ratio (committed:aborted): " << r.ratio.format() << "\n";
  o << "shadow pages at end: " << p.total.shadow_pages << ", reclaimed: " << r.shadow_reclaimed << "\n";
  o << "mean access cycles: " << fmt_double(p.total.mean_access_cycles(), 1) << "\n";
  o << "integrity violations: " << r.integrity_violations << "\n";
  return o.str();
}

std::string resolve_axis(const std::string& axis) {
  static const std::pair<const char*, const char*> aliases[] = {
      {"cooling_period", "policy.cooling_period"},
      {"sample_prob", "policy.sample_prob"},
      {"page_copy_cost", "costs.page_copy_cost"},
      {"minor_fault_cost", "costs.minor_fault_cost"},
      {"tlb_ipi_cost_per_core", "costs.tlb_ipi_cost_per_core"},
      {"remap_cost", "costs.remap_cost"},
      {"rss", "scenario.rss_pages"},
      {"rss_pages", "scenario.rss_pages"},
      {"read_fraction", "scenario.read_fraction"},
      {"skew", "scenario.skew"},
      {"duration", "scenario.duration"},
      {"scale", "scenario.scale"},
      {"seed", "seed"},
      {"cores", "memory.cores"},
      {"fast_pages", "memory.fast_pages"},
      {"slow_pages", "memory.slow_pages"},
  };
  for (const auto& [a, path] : aliases)
    if (axis == a) return path;
  return axis;
}

void set_dotted(json& doc, const std::string& path, const json& value) {
  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) config_error("sweep axis '" + path + "' has an empty component");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    if (!cur->contains(part)) (*cur)[part] = json::object();
    cur = &(*cur)[part];
    if (!cur->is_object()) config_error("sweep axis '" + path + "' crosses a non-object key");
    start = dot + 1;
  }
}

json parse_axis_value(const std::string& text) {
  if (text.empty()) config_error("empty sweep value");
  const bool integral = text.find_first_not_of("0123456789") == std::string::npos;
  if (integral) return json(std::stoull(text));
  std::size_t pos = 0;
  try {
    const double d = std::stod(text, &pos);
    if (pos == text.size()) return json(d);
  } catch (const std::exception&) {
  }
  return json(text);
}

int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  try {
    rc = parse_run_config(load_json_file(config_path));
  } catch (const SimError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  RunResult r;
  try {
    r = run_simulation(rc.sim);
  } catch (const SimError& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kExitConfig : kExitInternal;
  }
  try {
    std::filesystem::create_directories(rc.output_dir);
    const std::filesystem::path dir(rc.output_dir);
    write_file(dir / "report.json", make_report(rc, r, utc_timestamp()).dump(2) + "\n");
    write_file(dir / "snapshots.csv", snapshots_csv(r));
    write_file(dir / "summary.txt", summary_text(rc, r));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  out << summary_text(rc, r);
  if (r.oom) {
    err << "run terminated: " << r.error << "\n";
    return kExitOom;
  }
  return kExitOk;
}

namespace {

struct SweepRow {
  std::string value;
  int exit_code = kExitOk;
  std::string error;
  RunResult result;
};

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) {
    if (c == '"') o += '"';
    o += c;
  }
  return o + "\"";
}

}  // namespace

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<std::string>& values, unsigned jobs, std::ostream& out,
              std::ostream& err) {
  if (values.empty()) {
    err << "sweep: --values needs at least one value\n";
    return kExitConfig;
  }
  json base;
  RunConfig base_rc;
  try {
    base = load_json_file(config_path);
    base_rc = parse_run_config(base);
  } catch (const SimError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const auto path = resolve_axis(axis);
  const std::filesystem::path root(base_rc.output_dir);
  std::vector<SweepRow> rows(values.size());
  std::mutex io;

  auto run_row = [&](std::size_t i) {
    auto& row = rows[i];
    row.value = values[i];
    RunConfig rc;
    try {
      json doc = base;
      set_dotted(doc, path, parse_axis_value(values[i]));
      rc = parse_run_config(doc);
      rc.output_dir = (root / (axis + "=" + values[i])).string();
      row.result = run_simulation(rc.sim);
      std::filesystem::create_directories(rc.output_dir);
      write_file(std::filesystem::path(rc.output_dir) / "report.json",
                 make_report(rc, row.result, utc_timestamp()).dump(2) + "\n");
      write_file(std::filesystem::path(rc.output_dir) / "snapshots.csv", snapshots_csv(row.result));
      if (row.result.oom) {
        row.exit_code = kExitOom;
        row.error = row.result.error;
      }
    } catch (const SimError& e) {
      row.exit_code = e.code() == ErrorCode::ConfigError ? kExitConfig : kExitInternal;
      row.error = e.what();
    }
    std::lock_guard<std::mutex> lock(io);
    err << "sweep " << axis << "=" << values[i] << ": "
        << (row.exit_code == kExitOk ? "ok" : row.error) << "\n";
  };

  jobs = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(values.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < values.size(); ++i) run_row(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < values.size(); i = next++) run_row(i);
      });
    for (auto& t : pool) t.join();
  }

  std::ostringstream csv;
  csv << "schema_version,axis,value,status,exit_code,transient_end_cycle,stable_detected,thrashing,"
         "transient_throughput,stable_throughput,total_throughput,mean_access_cycles,"
         "promotions,demotions_remap,demotions_copy,tpm_committed,tpm_aborted,success_ratio,"
         "shadow_pages,shadow_reclaimed,minor_faults,error\n";
  int worst = kExitOk;
  for (const auto& row : rows) {
    const auto& p = row.result.phases;
    const bool ran = row.exit_code == kExitOk || row.exit_code == kExitOom;
    csv << kSchemaVersion << ',' << csv_escape(axis) << ',' << csv_escape(row.value) << ','
        << (row.exit_code == kExitOk ? "ok" : row.exit_code == kExitOom ? "oom" : "error") << ','
        << row.exit_code << ',';
    if (ran) {
      csv << p.transient_end_cycle << ',' << (p.stable_detected ? 1 : 0) << ',' << (p.thrashing ? 1 : 0)
          << ',' << fmt_double(p.transient.throughput_proxy) << ',' << fmt_double(p.stable.throughput_proxy)
          << ',' << fmt_double(p.total.throughput_proxy) << ',' << fmt_double(p.total.mean_access_cycles(), 2)
          << ',' << p.total.promotions() << ',' << p.total.demotions_remap << ','
          << p.total.demotions_copy << ',' << p.total.tpm_committed << ',' << p.total.tpm_aborted
          << ',' << row.result.ratio.format() << ',' << p.total.shadow_pages << ','
          << row.result.shadow_reclaimed << ',' << p.total.minor_faults << ',';
    } else {
      csv << ",,,,,,,,,,,,,,,,";
    }
    csv << csv_escape(row.error) << '\n';
    if (worst == kExitOk && row.exit_code != kExitOk) worst = row.exit_code;
  }
  try {
    std::filesystem::create_directories(root);
    write_file(root / "sweep.csv", csv.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  out << csv.str();
  return worst;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& csv_path,
               std::ostream& out, std::ostream& err) {
  if (inputs.empty()) {
    err << "usage: tierlab report <report.json>...\n";
    return kExitConfig;
  }
  std::vector<json> docs;
  for (const auto& f : inputs) {
    json d;
    try {
      d = load_json_file(f);
    } catch (const SimError& e) {
      err << "error: " << e.what() << "\n";
      return kExitConfig;
    }
    const int v = d.value("schema_version", -1);
    if (v != kSchemaVersion) {
      err << "error: " << f << " has schema_version " << v << ", expected " << kSchemaVersion << "\n";
      return kExitConfig;
    }
    docs.push_back(std::move(d));
  }

  std::ostringstream csv;
  csv << "schema_version,file,scenario,policy,platform,read_fraction,status,transient_throughput,"
         "stable_throughput,total_throughput,transient_promotions,transient_demotions,"
         "stable_promotions,stable_demotions,demotions_remap,demotions_copy,success_ratio\n";
  out << std::left << std::setw(30) << "run" << std::setw(10) << "policy" << std::right
      << std::setw(11) << "trans B/c" << std::setw(11) << "stable B/c" << std::setw(16)
      << "trans pro|dem" << std::setw(16) << "stable pro|dem" << std::setw(12) << "success" << "\n";
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    const auto& ph = d.at("phases");
    const auto& t = ph.at("transient");
    const auto& s = ph.at("stable");
    const auto promos = [](const json& x) {
      return x.at("promotions").at("read").get<std::uint64_t>() + x.at("promotions").at("write").get<std::uint64_t>();
    };
    const auto demos = [](const json& x) {
      return x.at("demotions").at("remap").get<std::uint64_t>() + x.at("demotions").at("copy").get<std::uint64_t>();
    };
    const auto& cfg = d.at("config");
    const std::string scen = cfg.at("scenario").at("kind").get<std::string>();
    const std::string pol = cfg.at("policy").at("kind").get<std::string>();
    csv << kSchemaVersion << ',' << csv_escape(inputs[i]) << ',' << scen << ',' << pol << ','
        << cfg.at("platform").get<std::string>() << ','
        << fmt_double(cfg.at("scenario").at("read_fraction").get<double>(), 2) << ','
        << d.at("status").get<std::string>() << ','
        << fmt_double(t.at("throughput_proxy").get<double>()) << ','
        << fmt_double(s.at("throughput_proxy").get<double>()) << ','
        << fmt_double(ph.at("total").at("throughput_proxy").get<double>()) << ',' << promos(t) << ','
        << demos(t) << ',' << promos(s) << ',' << demos(s) << ','
        << ph.at("total").at("demotions").at("remap").get<std::uint64_t>() << ','
        << ph.at("total").at("demotions").at("copy").get<std::uint64_t>() << ','
        << d.at("success_ratio").get<std::string>() << '\n';
    out << std::left << std::setw(30) << (scen + "/" + cfg.at("platform").get<std::string>() + " #" + std::to_string(i))
        << std::setw(10) << pol << std::right << std::setw(11)
        << fmt_double(t.at("throughput_proxy").get<double>(), 4) << std::setw(11)
        << fmt_double(s.at("throughput_proxy").get<double>(), 4) << std::setw(16)
        << (std::to_string(promos(t)) + "|" + std::to_string(demos(t))) << std::setw(16)
        << (std::to_string(promos(s)) + "|" + std::to_string(demos(s))) << std::setw(12)
        << d.at("success_ratio").get<std::string>() << "\n";
  }
  if (!csv_path.empty()) {
    try {
      write_file(csv_path, csv.str());
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitConfig;
    }
  }
  return kExitOk;
}

}  // namespace tierlab
