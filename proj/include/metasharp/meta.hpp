#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metasharp/objective.hpp"
#include "metasharp/sharpness.hpp"
#include "metasharp/tasks.hpp"
#include "metasharp/trace.hpp"

namespace metasharp {

enum class Algorithm { maml, sharpmaml, dgs };
enum class MetaOptimizer { sgd, adam };

/// How the inner loop treats the meta-batch. per_task_clone adapts a fresh
/// copy of the meta parameters for every task (the standard reading);
/// sequential_literal starts each task's adaptation from the previous task's
/// adapted parameters, the way the update list reads when taken verbatim.
/// The outer update is applied to the entry parameters in both modes.
enum class AdaptMode { per_task_clone, sequential_literal };

const char* algorithm_name(Algorithm a);
const char* optimizer_name(MetaOptimizer o);
const char* adapt_mode_name(AdaptMode m);
Algorithm algorithm_from_name(const std::string& s);
MetaOptimizer optimizer_from_name(const std::string& s);
AdaptMode adapt_mode_from_name(const std::string& s);

/// Shared tally of objective evaluations, used to pin down each algorithm's
/// per-step cost. Gradient evaluations and value-only evaluations are counted
/// separately; increments are atomic so threaded steps count correctly.
struct EvalCounter {
    std::atomic<std::uint64_t> grads{0};
    std::atomic<std::uint64_t> values{0};
    std::uint64_t total() const { return grads.load() + values.load(); }
    void reset() {
        grads.store(0);
        values.store(0);
    }
};

/// Decorator that counts every evaluation of the wrapped objective.
class CountingObjective final : public Objective {
  public:
    CountingObjective(std::shared_ptr<const Objective> base, std::shared_ptr<EvalCounter> counter);
    std::size_t dim() const override { return base_->dim(); }
    LossGrad eval(const ParamVector& theta) const override;
    double value(const ParamVector& theta) const override;

  private:
    std::shared_ptr<const Objective> base_;
    std::shared_ptr<EvalCounter> counter_;
};

/// One meta-learning task: a support objective the inner loop adapts on and
/// a query objective the outer update is computed from.
struct MetaTask {
    std::shared_ptr<const Objective> support;
    std::shared_ptr<const Objective> query;
    TaskDescriptor desc;
};

/// Source of meta-batches. next_batch returns exactly m tasks or nullopt once
/// the stream cannot supply a full batch (training then stops with a partial
/// trace). All tasks share the parameter dimension reported by dim().
///
/// episode_hash() is an order-sensitive digest of the raw content of every
/// episode issued so far. Two runs that consumed identical episode sequences
/// report identical hashes, which is how run manifests prove that two
/// algorithms saw the same data.
class TaskStream {
  public:
    virtual ~TaskStream() = default;
    virtual std::size_t dim() const = 0;
    virtual std::optional<std::vector<MetaTask>> next_batch(std::size_t m) = 0;
    std::uint64_t episode_hash() const { return hash_; }

  protected:
    void fold_hash(std::uint64_t bits);
    void fold_hash(double v);
    void fold_hash(const std::vector<double>& vs);
    void fold_batch(const LabeledBatch& batch);

  private:
    std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

/// Sinusoid regression episodes on a fixed network architecture. Each task
/// gets an independent seed derived from the master seed, so the sequence is
/// reproducible and independent of batch size. budget == 0 means unlimited.
class SinusoidStream final : public TaskStream {
  public:
    SinusoidStream(MlpSpec spec, std::size_t k_shot, std::size_t q_query, std::uint64_t seed,
                   std::size_t budget = 0);
    std::size_t dim() const override { return spec_.param_count(); }
    std::optional<std::vector<MetaTask>> next_batch(std::size_t m) override;

  private:
    MlpSpec spec_;
    std::size_t k_shot_, q_query_;
    std::uint64_t seed_;
    std::size_t budget_;
    std::size_t issued_ = 0;
};

/// Gaussian-blob classification episodes: n_way unit-variance clusters with
/// centers kept at least `separation` apart.
class BlobStream final : public TaskStream {
  public:
    BlobStream(MlpSpec spec, EpisodeSpec episode, std::size_t input_dim, double separation,
               std::uint64_t seed, std::size_t budget = 0);
    std::size_t dim() const override { return spec_.param_count(); }
    std::optional<std::vector<MetaTask>> next_batch(std::size_t m) override;

  private:
    MlpSpec spec_;
    EpisodeSpec episode_;
    std::size_t input_dim_;
    double separation_;
    std::uint64_t seed_;
    std::size_t budget_;
    std::size_t issued_ = 0;
};

/// Strongly convex diagnostic family: each task is a diagonal quadratic with
/// eigenvalues drawn from [curv_lo, curv_hi] and a random center; support and
/// query see the same curvature with centers jittered independently by up to
/// +-jitter per coordinate (jitter 0 makes them identical).
class QuadraticStream final : public TaskStream {
  public:
    QuadraticStream(std::size_t dim, double curv_lo, double curv_hi, double center_scale,
                    double jitter, std::uint64_t seed, std::size_t budget = 0);
    std::size_t dim() const override { return dim_; }
    std::optional<std::vector<MetaTask>> next_batch(std::size_t m) override;

  private:
    std::size_t dim_;
    double curv_lo_, curv_hi_, center_scale_, jitter_;
    std::uint64_t seed_;
    std::size_t budget_;
    std::size_t issued_ = 0;
};

/// Few-shot episodes sampled from a fixed labeled dataset.
class DatasetStream final : public TaskStream {
  public:
    DatasetStream(std::shared_ptr<const Dataset> data, MlpSpec spec, EpisodeSpec episode,
                  std::uint64_t seed, std::size_t budget = 0);
    std::size_t dim() const override { return spec_.param_count(); }
    std::optional<std::vector<MetaTask>> next_batch(std::size_t m) override;

  private:
    std::shared_ptr<const Dataset> data_;
    MlpSpec spec_;
    EpisodeSpec episode_;
    std::uint64_t seed_;
    std::size_t budget_;
    std::size_t issued_ = 0;
};

/// Replays a fixed list of tasks in order; chunks of m per batch. With
/// cycle == true the list repeats forever. Used by tests that need exact
/// control over the tasks a step sees.
class FixedStream final : public TaskStream {
  public:
    explicit FixedStream(std::vector<MetaTask> tasks, bool cycle = false);
    std::size_t dim() const override;
    std::optional<std::vector<MetaTask>> next_batch(std::size_t m) override;

  private:
    std::vector<MetaTask> tasks_;
    bool cycle_;
    std::size_t pos_ = 0;
};

/// Everything one outer step needs to know besides the tasks themselves.
/// measure_time controls whether step_ns is filled (off by default so runs
/// are byte-for-byte reproducible).
struct MetaConfig {
    Algorithm algo = Algorithm::dgs;
    SharpnessConfig sharp;
    MetaOptimizer optimizer = MetaOptimizer::sgd;
    AdaptMode adapt_mode = AdaptMode::per_task_clone;
    std::size_t threads = 1;
    bool measure_time = false;

    void validate() const;
};

/// Inner-loop output: adapted parameters plus the final step's perturbation
/// (zero when the algorithm takes none), which the outer level reuses.
struct AdaptResult {
    ParamVector theta;
    GradVector last_eps;
    double last_support_loss = 0.0;
    int steps_taken = 0;
};

/// Plain gradient descent on the support objective (no perturbation).
AdaptResult maml_inner_adapt(const Objective& obj, ParamVector theta, const SharpnessConfig& cfg);
/// Sharpness-aware inner loop: step along the gradient taken at the ascent
/// point theta + alpha_inner * g/||g||.
AdaptResult sam_inner_adapt(const Objective& obj, ParamVector theta, const SharpnessConfig& cfg);
/// Gradient-matching inner loop: step along grad + grad_p where grad_p is
/// taken at theta + eps - delta*g.
AdaptResult sagm_inner_adapt(const Objective& obj, ParamVector theta, const SharpnessConfig& cfg);
/// Dispatch on the algorithm's own inner rule.
AdaptResult inner_adapt(Algorithm algo, const Objective& obj, ParamVector theta,
                        const SharpnessConfig& cfg);

/// One outer iteration over a meta-batch: adapt every task, build the outer
/// direction the algorithm prescribes, update theta in place, and report the
/// shared diagnostics (computed identically for every algorithm, with the
/// exact fast path G_p = G, gap = 0, cos = 1 when alpha_outer and delta are
/// both zero). state.t supplies the step index in the report.
MetaStepReport meta_step(const std::vector<MetaTask>& tasks, ParamVector& theta,
                         const MetaConfig& cfg, OptState& state);

/// Called after every outer step with the fresh report and updated params.
using StepCallback = std::function<void(const MetaStepReport&, const ParamVector&)>;

/// Runs `steps` outer iterations of meta_step, drawing meta_batch tasks per
/// step from the stream. Stops early (partial trace) when the stream is
/// exhausted. theta is updated in place.
RunTrace train(TaskStream& stream, ParamVector& theta, const MetaConfig& cfg,
               std::size_t meta_batch, std::size_t steps, const StepCallback& on_step = {});

/// Post-adaptation evaluation: for up to n_tasks tasks, adapt on the support
/// set with the algorithm's own inner rule and record the query loss at the
/// adapted parameters.
struct EvalSummary {
    std::vector<double> task_losses;
    double mean = 0.0;
    double median = 0.0;
};

EvalSummary evaluate(TaskStream& stream, const ParamVector& theta, const MetaConfig& cfg,
                     std::size_t n_tasks);

/// The meta loss as a plain objective over the meta-parameters, first-order:
/// value(theta) sums each task's query loss at its inner-adapted parameters;
/// eval(theta).grad sums the query gradients taken at those adapted points
/// (the adaptation itself is treated as constant, matching the update rules
/// above). Useful for measuring empirical gradient/smoothness constants of
/// the function the outer loop actually descends.
class MetaObjective : public Objective {
  public:
    MetaObjective(std::vector<MetaTask> tasks, Algorithm algo, SharpnessConfig sharp);

    std::size_t dim() const override { return dim_; }
    LossGrad eval(const ParamVector& theta) const override;
    double value(const ParamVector& theta) const override;

  private:
    std::vector<MetaTask> tasks_;
    Algorithm algo_;
    SharpnessConfig sharp_;
    std::size_t dim_ = 0;
};

} // namespace metasharp
