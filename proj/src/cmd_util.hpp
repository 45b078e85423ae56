#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "hot/attention.hpp"
#include "hot/commands.hpp"
#include "hot/config_json.hpp"
#include "hot/csv.hpp"

namespace hot::cmd {

using nlohmann::json;

/// Base seed ("seed", overridable by --seed) and count ("seeds") expanded
/// to base, base + 1, ...
std::vector<std::uint64_t> seed_list(const json& j, const RunOptions& opt, std::size_t default_count,
                                     const std::string& where);

/// Allowed keys plus the shared "command", "seed" and "seeds" keys.
void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& command);

std::vector<AttentionVariant> variant_list(const json& j, const char* key, const std::string& where);

/// "3x4"; "scalar" for no modes.
std::string shape_str(const std::vector<std::size_t>& dims);

/// Writes `csv` under out_dir and records the file name in the report.
void emit(CommandReport& report, const RunOptions& opt, const std::string& name, const CsvWriter& csv);

double seconds_since(std::chrono::steady_clock::time_point start);

}  // namespace hot::cmd
