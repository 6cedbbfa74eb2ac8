// failcast command-line tool: gen-data, train-pilot, gen-saliency,
// train-failcast, eval, gradcheck.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "failcast/app/commands.hpp"
#include "failcast/error.hpp"

namespace app = failcast::app;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON pipeline config");
  sub->add_option("--set", f.sets, "override a config key, e.g. pilot.epochs=5")
      ->take_all();
  sub->add_option("--out", f.out, "output directory (config out_dir)");
  sub->add_option("--seed", f.seed, "global seed");
  sub->add_flag("--quiet", f.quiet, "suppress progress output");
}

app::PipelineConfig build_config(const CommonFlags& f,
                                 std::optional<double> alarm_threshold) {
  std::vector<std::string> sets = f.sets;
  if (!f.out.empty()) sets.push_back("out_dir=" + nlohmann::json(f.out).dump());
  if (f.seed) sets.push_back("seed=" + std::to_string(*f.seed));
  if (alarm_threshold) sets.push_back("eval.alarm_threshold=" + nlohmann::json(*alarm_threshold).dump());
  std::optional<std::filesystem::path> path;
  if (!f.config.empty()) path = f.config;
  return app::load_config(path, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Failure prediction for a steering-angle regressor"};
  cli.require_subcommand(1);

  CommonFlags flags;
  std::optional<double> alarm_threshold;
  auto* gen_data = cli.add_subcommand("gen-data", "render train/val/test datasets");
  auto* train_pilot = cli.add_subcommand("train-pilot", "train the steering model");
  auto* gen_saliency =
      cli.add_subcommand("gen-saliency", "build failure-prediction trainsets");
  auto* train_failcast =
      cli.add_subcommand("train-failcast", "transfer conv layers, train failure predictors");
  auto* eval = cli.add_subcommand("eval", "evaluate failure predictors on the test set");
  auto* gradcheck = cli.add_subcommand("gradcheck", "finite-difference gradient checks");
  for (auto* sub : {gen_data, train_pilot, gen_saliency, train_failcast, eval, gradcheck}) {
    add_common(sub, flags);
  }
  eval->add_option("--alarm-threshold", alarm_threshold,
                   "alarm when |predicted error| >= this (default: failure threshold)");
  bool inject_fault = false;
  gradcheck->add_flag("--inject-fault", inject_fault)->group("");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : app::kExitConfig;
  }

  std::ostringstream sink;
  std::ostream& log = flags.quiet ? static_cast<std::ostream&>(sink) : std::cout;
  try {
    if (gradcheck->parsed()) {
      failcast::GradcheckOptions options;
      if (flags.seed) options.base_seed = *flags.seed;
      options.inject_conv_sign_bug = inject_fault;
      return app::cmd_gradcheck(options, log);
    }
    const auto cfg = build_config(flags, alarm_threshold);
    if (gen_data->parsed()) app::cmd_gen_data(cfg, log);
    if (train_pilot->parsed()) app::cmd_train_pilot(cfg, log);
    if (gen_saliency->parsed()) app::cmd_gen_saliency(cfg, log);
    if (train_failcast->parsed()) app::cmd_train_failcast(cfg, log);
    if (eval->parsed()) app::cmd_eval(cfg, log);
  } catch (const std::exception& e) {
    std::cerr << "failcast: " << e.what() << "\n";
    return app::exit_code_for(e);
  }
  return app::kExitOk;
}
