#pragma once

// Pipeline stages behind the command-line subcommands. Each throws a
// failcast::Error subclass on failure; exit_code_for maps them to the
// process exit status.

#include <exception>
#include <ostream>

#include "failcast/app/config.hpp"
#include "failcast/gradcheck.hpp"

namespace failcast::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

int exit_code_for(const std::exception& e);

// train/val/test SFDS files plus manifests, from disjoint seed streams.
void cmd_gen_data(const PipelineConfig& cfg, std::ostream& log);
// Main (weakly trained) steering model, checkpoint and per-epoch loss CSV.
void cmd_train_pilot(const PipelineConfig& cfg, std::ostream& log);
// Failure trainsets for the configured input kinds, with provenance sidecars.
void cmd_gen_saliency(const PipelineConfig& cfg, std::ostream& log);
// Conv transfer and failure-predictor training per input kind.
void cmd_train_failcast(const PipelineConfig& cfg, std::ostream& log);
// Reports, per-frame predictions and the saliency/image comparison.
void cmd_eval(const PipelineConfig& cfg, std::ostream& log);
// Returns kExitOk when every gradient check passes, kExitCheckFailed otherwise.
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& log);

}  // namespace failcast::app
