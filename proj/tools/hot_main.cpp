#include <iostream>

#include "CLI11.hpp"
#include "hot/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"HOT attention verification and experiment runner"};
  app.require_subcommand(1);
  std::string config;
  std::string out = "hot_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> cap;
  for (const char* name : hot::kCommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON config file (omit for defaults)");
    sub->add_option("--seed", seed, "base seed override");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--cap", cap, "oracle token cap override");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hot::kExitConfig;
  }
  hot::RunOptions opt;
  opt.seed = seed;
  opt.cap = cap;
  opt.out_dir = out;
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return hot::run_cli(command, config, opt, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << '\n';
    return hot::kExitBreach;
  }
}
