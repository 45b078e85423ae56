#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace hot {

inline constexpr int kExitPass = 0;
inline constexpr int kExitBreach = 1;
inline constexpr int kExitConfig = 2;

/// Command-line overrides applied on top of the JSON config.
struct RunOptions {
  std::optional<std::uint64_t> seed;  // replaces the config's base "seed"
  std::optional<std::size_t> cap;     // replaces "oracle_cap"
  std::filesystem::path out_dir = "hot_out";
};

struct Assertion {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Everything a command reports. `results` must be reproducible from the
/// config alone; wall-clock values go to `timing`.
struct CommandReport {
  std::string command;
  std::vector<Assertion> assertions;
  nlohmann::ordered_json results = nlohmann::ordered_json::object();
  nlohmann::ordered_json timing = nlohmann::ordered_json::object();
  std::vector<std::string> files;

  void check(const std::string& name, bool pass, const std::string& detail = "");
  bool passed() const;
};

inline constexpr const char* kCommands[] = {"equiv", "gradcheck", "kronrank", "bench", "ablate", "train"};

// Each command writes its CSV files into opt.out_dir and returns the report.
// Bad configs raise ConfigError.
CommandReport run_equiv(const nlohmann::json& cfg, const RunOptions& opt);
CommandReport run_gradcheck(const nlohmann::json& cfg, const RunOptions& opt);
CommandReport run_kronrank(const nlohmann::json& cfg, const RunOptions& opt);
CommandReport run_bench(const nlohmann::json& cfg, const RunOptions& opt);
CommandReport run_ablate(const nlohmann::json& cfg, const RunOptions& opt);
CommandReport run_train(const nlohmann::json& cfg, const RunOptions& opt);

CommandReport run_command(const std::string& command, const nlohmann::json& cfg, const RunOptions& opt);

/// summary.json (command, pass, assertions, results, files) and timing.json.
void write_report(const CommandReport& report, const RunOptions& opt);

/// Reads the config, runs, writes the report and prints one line per
/// assertion to `out`. Returns kExitPass, kExitBreach or kExitConfig.
int run_cli(const std::string& command, const std::filesystem::path& config, const RunOptions& opt,
            std::ostream& out, std::ostream& err);

}  // namespace hot
