#include <fstream>
#include <iostream>

#include "cmd_util.hpp"

namespace hot {

namespace cmd {

std::vector<std::uint64_t> seed_list(const json& j, const RunOptions& opt, std::size_t default_count,
                                     const std::string& where) {
  const auto base = opt.seed.value_or(get_or<std::uint64_t>(j, "seed", 0, where));
  const auto count = get_or<std::size_t>(j, "seeds", default_count, where);
  if (count == 0) throw ConfigError(where + ".seeds: must be >= 1");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(base + i);
  return out;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& command) {
  if (!j.is_object()) throw ConfigError(command + ": config must be a JSON object");
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    if (k == "command" || k == "seed" || k == "seeds") continue;
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError(command + ": unknown key '" + k + "'");
  }
  if (j.contains("command") && j.at("command") != command)
    throw ConfigError(command + ": config is for command " + j.at("command").dump());
}

std::vector<AttentionVariant> variant_list(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {std::begin(kAllVariants), std::end(kAllVariants)};
  std::vector<AttentionVariant> out;
  for (const auto& name : get_or<std::vector<std::string>>(j, key, {}, where)) {
    try {
      out.push_back(parse_variant(name));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
  if (out.empty()) throw ConfigError(where + "." + key + ": empty list");
  return out;
}

std::string shape_str(const std::vector<std::size_t>& dims) {
  if (dims.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

void emit(CommandReport& report, const RunOptions& opt, const std::string& name, const CsvWriter& csv) {
  csv.write(opt.out_dir / name);
  report.files.push_back(name);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace cmd

void CommandReport::check(const std::string& name, bool pass, const std::string& detail) {
  assertions.push_back({name, pass, detail});
}

bool CommandReport::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

CommandReport run_command(const std::string& command, const nlohmann::json& cfg, const RunOptions& opt) {
  std::filesystem::create_directories(opt.out_dir);
  if (command == "equiv") return run_equiv(cfg, opt);
  if (command == "gradcheck") return run_gradcheck(cfg, opt);
  if (command == "kronrank") return run_kronrank(cfg, opt);
  if (command == "bench") return run_bench(cfg, opt);
  if (command == "ablate") return run_ablate(cfg, opt);
  if (command == "train") return run_train(cfg, opt);
  throw ConfigError("unknown command '" + command + "'");
}

void write_report(const CommandReport& report, const RunOptions& opt) {
  nlohmann::ordered_json s;
  s["command"] = report.command;
  s["pass"] = report.passed();
  s["assertions"] = nlohmann::ordered_json::array();
  for (const auto& a : report.assertions)
    s["assertions"].push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
  s["results"] = report.results;
  s["files"] = report.files;
  std::ofstream(opt.out_dir / "summary.json", std::ios::binary) << s.dump(2) << '\n';
  std::ofstream(opt.out_dir / "timing.json", std::ios::binary) << report.timing.dump(2) << '\n';
}

int run_cli(const std::string& command, const std::filesystem::path& config, const RunOptions& opt,
            std::ostream& out, std::ostream& err) {
  CommandReport report;
  try {
    nlohmann::json cfg = nlohmann::json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw ConfigError("cannot open config " + config.string());
      try {
        cfg = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(config.string() + ": " + e.what());
      }
    }
    report = run_command(command, cfg, opt);
    write_report(report, opt);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  for (const auto& a : report.assertions)
    out << (a.pass ? "PASS " : "FAIL ") << a.name << (a.detail.empty() ? "" : ": " + a.detail) << '\n';
  out << report.command << ": " << (report.passed() ? "PASS" : "FAIL") << " (" << report.assertions.size()
      << " assertions, outputs in " << opt.out_dir.string() << ")\n";
  return report.passed() ? kExitPass : kExitBreach;
}

}  // namespace hot
