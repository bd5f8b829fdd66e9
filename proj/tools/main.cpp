#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mucave/commands.hpp"
#include "mucave/flux.hpp"

using namespace mucave;

int main(int argc, char** argv) {
  CLI::App app{"Layered-cave inversion from muon counts"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> profile;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--out", out_dir, "Override the output directory");
    cmd->add_option("--profile", profile, "Plan preset")
        ->check(CLI::IsMember({"desk", "paper"}));
  };
  auto* simulate = app.add_subcommand("simulate", "Write synthetic counts from the true model");
  auto* sensitivity = app.add_subcommand("sensitivity", "Build and save the sensitivity matrix");
  auto* sample = app.add_subcommand("sample", "Run the super-chain sampler");
  auto* diagnose = app.add_subcommand("diagnose", "Nested R-hat of saved draws");
  auto* summarize = app.add_subcommand("summarize", "Posterior summaries of saved draws");
  for (auto* cmd : {simulate, sensitivity, sample, diagnose, summarize}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    RunConfig config = load_config(config_path);
    if (seed) {
      config.seed = *seed;
      config.plan.seed = *seed;
    }
    if (out_dir) config.output_dir = *out_dir;
    if (profile) apply_profile(config, *profile);
    config.validate();

    if (simulate->parsed()) return cmd_simulate(config, std::cout);
    if (sensitivity->parsed()) return cmd_sensitivity(config, std::cout);
    if (sample->parsed()) return cmd_sample(config, std::cout);
    if (diagnose->parsed()) return cmd_diagnose(config, std::cout);
    return cmd_summarize(config, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedModel& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
