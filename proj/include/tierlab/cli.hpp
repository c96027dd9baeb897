#pragma once

// Run configuration, report emission and the run/sweep/report commands.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "tierlab/sim_engine.hpp"

namespace tierlab {

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitOom = 2;
inline constexpr int kExitInternal = 3;

struct RunConfig {
  SimConfig sim;
  std::string output_dir = "out";
  nlohmann::json source;  // the document the config was parsed from
};

nlohmann::json load_json_file(const std::string& path);

// Pages from a count or a "<size>@<page size>" string such as "16GiB@4KiB".
std::uint64_t parse_pages(const nlohmann::json& v, const std::string& key);
std::uint64_t parse_size_bytes(const std::string& text, const std::string& key);

// Throws SimError(ConfigError) naming the offending key. TIERLAB_SEED, when
// set, replaces the seed.
RunConfig parse_run_config(const nlohmann::json& doc);

// Effective configuration after defaults, as written into report.json.
nlohmann::json effective_config(const RunConfig& cfg);

nlohmann::json snapshot_json(const MetricsSnapshot& s);
nlohmann::json make_report(const RunConfig& cfg, const RunResult& r, const std::string& timestamp);
std::string snapshots_csv(const RunResult& r);
std::string summary_text(const RunConfig& cfg, const RunResult& r);

// Full dotted path for a sweep axis ("cooling_period" -> "policy.cooling_period").
std::string resolve_axis(const std::string& axis);
void set_dotted(nlohmann::json& doc, const std::string& path, const nlohmann::json& value);
nlohmann::json parse_axis_value(const std::string& text);

int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<std::string>& values, unsigned jobs, std::ostream& out,
              std::ostream& err);
int cmd_report(const std::vector<std::string>& inputs, const std::string& csv_path,
               std::ostream& out, std::ostream& err);

}  // namespace tierlab
