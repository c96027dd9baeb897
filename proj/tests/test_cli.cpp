#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tierlab/cli.hpp"

using namespace tierlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tierlab_cli_" + std::to_string(::getpid())) / name;
  fs::create_directories(dir);
  return dir;
}

json small_doc(const fs::path& out) {
  return json{{"seed", 1},
              {"scenario", {{"kind", "small"}, {"duration", 50000}}},
              {"policy", {{"kind", "nomad"}}},
              {"output", {{"dir", out.string()}}}};
}

std::string write_json(const fs::path& p, const json& j) {
  std::ofstream(p) << j.dump(2);
  return p.string();
}

std::string config_error_of(const json& doc) {
  try {
    parse_run_config(doc);
  } catch (const SimError& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const auto rc = parse_run_config(small_doc("x"));
  CHECK(rc.sim.seed == 1);
  CHECK(rc.sim.platform == "A");
  CHECK(rc.sim.cores == 4);
  CHECK(rc.sim.fast.capacity_pages == 16384);
  CHECK(rc.sim.slow.capacity_pages == 16384);
  CHECK(rc.sim.slow.read_latency == 854);
  CHECK(rc.sim.scenario.read_fraction == 1.0);
  CHECK(rc.sim.policy.cooling_period == 2'000'000);
  CHECK(rc.output_dir == "x");
}

TEST_CASE("config errors name the key") {
  auto doc = small_doc("x");
  doc.erase("seed");
  CHECK(config_error_of(doc).find("'seed'") != std::string::npos);

  doc = small_doc("x");
  doc["scenario"]["colour"] = 1;
  CHECK(config_error_of(doc).find("scenario.colour") != std::string::npos);

  doc = small_doc("x");
  doc["scenario"]["read_fraction"] = 1.5;
  CHECK(config_error_of(doc).find("scenario.read_fraction") != std::string::npos);

  doc = small_doc("x");
  doc["policy"]["kind"] = "lfu";
  CHECK(config_error_of(doc).find("policy.kind") != std::string::npos);

  doc = small_doc("x");
  doc["memory"] = {{"cores", "four"}};
  CHECK(config_error_of(doc).find("memory.cores") != std::string::npos);

  doc = small_doc("x");
  doc["scenario"]["wss_pages"] = 30000;
  CHECK(config_error_of(doc).find("must not exceed rss_pages") != std::string::npos);

  doc = small_doc("x");
  doc["memory"] = {{"slow_pages", 1000}};
  CHECK(config_error_of(doc).find("slow") != std::string::npos);
}

TEST_CASE("sizes") {
  CHECK(parse_size_bytes("4KiB", "k") == 4096);
  CHECK(parse_size_bytes("1.5MiB", "k") == 1572864);
  CHECK(parse_pages(json("16MiB@4KiB"), "k") == 4096);
  CHECK(parse_pages(json(77), "k") == 77);
  CHECK_THROWS_AS(parse_pages(json("16MiB@2KiB"), "k"), SimError);
  CHECK_THROWS_AS(parse_pages(json("16XB@4KiB"), "k"), SimError);
  CHECK_THROWS_AS(parse_pages(json("6KiB@4KiB"), "k"), SimError);
}

TEST_CASE("overrides reach the simulation config") {
  auto doc = small_doc("x");
  doc["platform"] = "D";
  doc["memory"] = {{"fast_pages", "64MiB@4KiB"}, {"slow_pages", 20000}, {"cores", 2}};
  doc["costs"] = {{"page_copy_cost", 5000}};
  doc["policy"] = {{"kind", "sampling"}, {"cooling_period", "quickcool"}};
  doc["sim"] = {{"low_water_mark", 100}};
  const auto rc = parse_run_config(doc);
  CHECK(rc.sim.fast.capacity_pages == 16384);
  CHECK(rc.sim.slow.capacity_pages == 20000);
  CHECK(rc.sim.cores == 2);
  CHECK(rc.sim.fast.read_latency == 391);
  CHECK(rc.sim.costs.page_copy_cost == 5000);
  CHECK(rc.sim.policy.kind == PolicyKind::Sampling);
  CHECK(rc.sim.policy.cooling_period == 2000);
  CHECK(rc.sim.sim.fast_thresholds->low_water_mark == 100);
}

TEST_CASE("TIERLAB_SEED replaces the seed") {
  ::setenv("TIERLAB_SEED", "99", 1);
  const auto rc = parse_run_config(small_doc("x"));
  ::unsetenv("TIERLAB_SEED");
  CHECK(rc.sim.seed == 99);
  CHECK(rc.sim.scenario.seed == 99);
}

TEST_CASE("sweep helpers") {
  CHECK(resolve_axis("cooling_period") == "policy.cooling_period");
  CHECK(resolve_axis("page_copy_cost") == "costs.page_copy_cost");
  CHECK(resolve_axis("rss") == "scenario.rss_pages");
  CHECK(resolve_axis("sim.slice") == "sim.slice");
  json doc = json::object();
  set_dotted(doc, "a.b.c", 3);
  CHECK(doc["a"]["b"]["c"] == 3);
  CHECK(parse_axis_value("12").is_number_unsigned());
  CHECK(parse_axis_value("0.5").is_number_float());
  CHECK(parse_axis_value("quickcool").is_string());
}

TEST_CASE("run writes the report files and exits 0") {
  const auto dir = scratch("run");
  const auto cfg = write_json(dir / "cfg.json", small_doc(dir / "out"));
  std::ostringstream out, err;
  CHECK(cmd_run(cfg, out, err) == kExitOk);
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(fs::exists(dir / "out" / "snapshots.csv"));
  CHECK(fs::exists(dir / "out" / "summary.txt"));
  const auto rep = load_json_file((dir / "out" / "report.json").string());
  CHECK(rep["schema_version"] == kSchemaVersion);
  CHECK(rep["status"] == "ok");
  CHECK(rep["config"]["seed"] == 1);
  CHECK(rep["accounting"]["closed"] == true);
  std::ifstream csv(dir / "out" / "snapshots.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("schema_version,cycle,", 0) == 0);
}

TEST_CASE("bad config exits 1, out of memory exits 2") {
  const auto dir = scratch("codes");
  auto doc = small_doc(dir / "out");
  doc["scenario"]["wss_pages"] = 999999;
  std::ostringstream out, err;
  CHECK(cmd_run(write_json(dir / "bad.json", doc), out, err) == kExitConfig);
  CHECK(err.str().find("wss_pages") != std::string::npos);
  CHECK(cmd_run((dir / "missing.json").string(), out, err) == kExitConfig);

  auto oom = small_doc(dir / "oom");
  oom["scenario"] = {{"kind", "large"}, {"duration", 2000000}};
  oom["policy"] = {{"kind", "tpp"}};
  oom["memory"] = {{"slow_pages", 11264}};
  CHECK(cmd_run(write_json(dir / "oom.json", oom), out, err) == kExitOom);
  const auto rep = load_json_file((dir / "oom" / "report.json").string());
  CHECK(rep["status"] == "oom");
}

TEST_CASE("report rejects a schema mismatch by version") {
  const auto dir = scratch("report");
  const auto cfg = write_json(dir / "cfg.json", small_doc(dir / "out"));
  std::ostringstream out, err;
  REQUIRE(cmd_run(cfg, out, err) == kExitOk);
  const auto good = (dir / "out" / "report.json").string();
  CHECK(cmd_report({good}, (dir / "report.csv").string(), out, err) == kExitOk);
  CHECK(fs::exists(dir / "report.csv"));

  auto rep = load_json_file(good);
  rep["schema_version"] = 7;
  const auto bad = write_json(dir / "old.json", rep);
  std::ostringstream err2;
  CHECK(cmd_report({good, bad}, "", out, err2) == kExitConfig);
  CHECK(err2.str().find("schema_version 7, expected 1") != std::string::npos);
}

TEST_CASE("sweep runs one row per value") {
  const auto dir = scratch("sweep");
  const auto cfg = write_json(dir / "cfg.json", small_doc(dir / "out"));
  std::ostringstream out, err;
  CHECK(cmd_sweep(cfg, "page_copy_cost", {"1000", "4000"}, 1, out, err) == kExitOk);
  std::ifstream csv(dir / "out" / "sweep.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3);
  CHECK(fs::exists(dir / "out" / "page_copy_cost=1000" / "report.json"));

  // a failing row is flagged and the sweep carries on
  std::ostringstream out2, err2;
  CHECK(cmd_sweep(cfg, "read_fraction", {"2.0", "0.5"}, 1, out2, err2) == kExitConfig);
  CHECK(out2.str().find(",error,") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "read_fraction=0.5" / "report.json"));
}

TEST_CASE("reports differ only in the timestamp") {
  const auto rc = parse_run_config(small_doc("x"));
  const auto a = make_report(rc, run_simulation(rc.sim), "t1");
  const auto b = make_report(rc, run_simulation(rc.sim), "t2");
  auto a2 = a, b2 = b;
  a2.erase("timestamp");
  b2.erase("timestamp");
  CHECK(a2.dump() == b2.dump());
  CHECK(a.dump() != b.dump());
}
