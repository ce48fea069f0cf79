#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metasharp/config.hpp"
#include "metasharp/meta.hpp"
#include "metasharp/trace.hpp"

namespace metasharp {

/// Fixed artifact names inside a run's output directory.
extern const char* const kTraceFile;       // per-step trace CSV
extern const char* const kParamsFile;      // final parameters
extern const char* const kCheckpointsFile; // parameter snapshots along the run
extern const char* const kManifestFile;    // config + resolved defaults + results
extern const char* const kSweepFile;       // aggregated sweep table
extern const char* const kCompareFile;     // algorithm comparison report
extern const char* const kBoundsFile;      // bound-satisfaction report
extern const char* const kSweepCsvHeader;

/// Episode stream the config describes. The eval stream is the same family
/// under a seed derived from the run seed, so held-out episodes never repeat
/// the training sequence.
std::unique_ptr<TaskStream> make_train_stream(const ExperimentConfig& cfg);
std::unique_ptr<TaskStream> make_eval_stream(const ExperimentConfig& cfg);

/// In-memory result of one full run: training plus held-out evaluation.
struct RunResult {
    RunTrace trace;
    ParamVector theta;                    // final meta parameters
    std::vector<ParamVector> checkpoints; // theta before training, strided snapshots, final
    EvalSummary eval;                     // post-adaptation query losses on held-out episodes
    std::optional<double> accuracy;       // classification only: mean argmax match rate
    std::vector<double> error_rates;      // classification only: per-episode error rates
    std::uint64_t train_episode_hash = 0;
    std::uint64_t eval_episode_hash = 0;
    std::uint64_t spec_hash = 0; // model hash recorded in parameter files
    std::size_t dim = 0;

    double mean_surrogate_gap() const;
    double mean_align_cos() const;
};

/// Runs the configured experiment without touching the disk.
RunResult run_experiment(const ExperimentConfig& cfg);

/// Subcommands. Each writes its artifacts under cfg.out and throws on
/// failure: ConfigError for config-level misuse, anything else for runtime
/// failures. The command-line tool maps exceptions to exit codes.
void cmd_train(const ExperimentConfig& cfg);
void cmd_sweep(const ExperimentConfig& cfg);
void cmd_compare(const ExperimentConfig& cfg);
void cmd_bounds(const ExperimentConfig& cfg);

} // namespace metasharp
