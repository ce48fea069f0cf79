#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasharp/meta.hpp"
#include "metasharp/mlp.hpp"
#include "metasharp/sharpness.hpp"
#include "metasharp/tasks.hpp"

namespace metasharp {

/// Raised for any structural problem with an experiment config: unreadable
/// file, malformed JSON, unknown keys, wrong types, or invalid values. The
/// command-line tool maps this to its config-error exit code.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class TaskSource { sinusoid, blobs, quadratic, idx };

const char* task_source_name(TaskSource s);
TaskSource task_source_from_name(const std::string& s);

/// Which episode generator feeds the run, plus its knobs. Only the fields of
/// the selected source are consulted; all are recorded in the manifest.
struct TaskConfig {
    TaskSource source = TaskSource::sinusoid;
    // sinusoid / blobs / idx episode shape
    std::size_t k_shot = 10;
    std::size_t q_query = 10;
    std::size_t n_way = 5;
    // blobs
    std::size_t input_dim = 2;
    double separation = 4.0;
    // quadratic
    std::size_t dim = 8;
    double curv_lo = 0.05;
    double curv_hi = 0.35;
    double center_scale = 1.0;
    double jitter = 0.0;
    // idx
    std::string images;
    std::string labels;
    std::size_t max_features = 64;

    void validate() const;
};

/// Inputs consumed only by the bound-reporting command.
struct BoundConfig {
    double U = 0.0;          // uniform-stability constant, user-supplied
    double psi = 0.05;       // confidence level of the PAC-Bayes bound
    double sigma_p_sq = 0.0; // prior variance; 0 means "smallest admissible"
    double sigma1_sq = 0.0;  // gradient-estimator variance bound
    double sigma2_sq = 0.0;  // perturbed-gradient-estimator variance bound
    double L_star = 0.0;     // best attainable loss for the convergence bounds

    void validate() const;
};

/// Complete description of a run: what to train, on which episodes, for how
/// long, and where to put the artifacts. One config drives every subcommand;
/// sweep/compare/bounds read their extra sections from here too.
struct ExperimentConfig {
    Algorithm algorithm = Algorithm::dgs;
    MetaOptimizer optimizer = MetaOptimizer::sgd;
    AdaptMode mode = AdaptMode::per_task_clone;
    std::uint64_t seed = 0;
    std::size_t steps = 100;       // outer iterations T
    std::size_t meta_batch = 4;    // tasks per outer step M
    std::size_t threads = 1;
    bool measure_time = false;
    std::size_t checkpoint_every = 1; // 0 disables the checkpoint series
    std::size_t eval_episodes = 100;  // held-out episodes for final metrics
    std::string out = "run_out";

    TaskConfig task;
    std::vector<std::size_t> hidden = {32, 32};
    Activation activation = Activation::tanh_act;
    SharpnessConfig sharp;

    std::vector<double> delta_grid; // sweep
    std::vector<double> alpha_grid; // sweep; empty means "just sharp.alpha_outer"
    std::vector<Algorithm> compare_algorithms;
    BoundConfig bounds;

    void validate() const;

    /// Network description implied by the task. idx episodes only know their
    /// feature count after the dataset is loaded and pooled, so it is passed
    /// in; quadratic tasks have no network and reject the call.
    MlpSpec mlp_spec(std::size_t idx_feature_dim = 0) const;

    /// The per-step knob block handed to the training loop.
    MetaConfig meta_config() const;
};

/// Parses and validates a JSON config. Unknown keys anywhere are errors that
/// name the offending key path; so are wrong types and invalid values.
ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

/// Serializes a config with every field resolved (defaults made explicit),
/// in a fixed key order so equal configs produce byte-identical text. This
/// is the "config" block of run manifests, and parses back losslessly.
std::string config_to_json_text(const ExperimentConfig& cfg);

} // namespace metasharp
