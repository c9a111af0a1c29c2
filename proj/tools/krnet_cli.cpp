#include "krnet/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"KRnet density estimation and steady Fokker-Planck solver"};
  app.set_version_flag("--version", krnet::version_string());
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
  bool quiet = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"estimate", "staged cross-entropy density estimation"},
      {"solve-fp", "adaptive residual training on a cataloged Fokker-Planck problem"},
      {"sample", "draw samples from a checkpoint"},
      {"eval", "evaluate a checkpoint (KL, cross entropy or point log-densities)"},
      {"grid", "tabulate model and exact log-densities on a tensor grid"}};
  std::vector<CLI::App*> subs;
  CLI::Option* seed_opt = nullptr;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    auto* s = sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--quiet", quiet, "no progress output");
    subs.push_back(sub);
    if (!seed_opt) seed_opt = s;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : krnet::kExitConfig;
  }

  std::string command;
  bool seed_given = false;
  for (auto* sub : subs) {
    if (sub->parsed()) {
      command = sub->get_name();
      seed_given = sub->get_option("--seed")->count() > 0;
    }
  }

  krnet::RunOptions options;
  if (seed_given) options.seed = seed;
  options.threads = threads;
  options.out = out;
  if (!quiet) options.log = &std::cerr;
  try {
    const krnet::Json config = krnet::read_json_file(config_path);
    const krnet::Json summary = krnet::run_command(command, config, options);
    std::cout << summary.dump(2) << std::endl;
    return krnet::kExitOk;
  } catch (...) {
    std::string message;
    const int code = krnet::exit_code_for_current_exception(message);
    std::cerr << "krnet " << command << ": " << message << std::endl;
    return code;
  }
}
