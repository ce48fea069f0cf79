#include "metasharp/meta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace metasharp {

namespace {

std::shared_ptr<const Objective> borrow(const Objective& obj) {
    return std::shared_ptr<const Objective>(&obj, [](const Objective*) {});
}

bool is_zero(const GradVector& g) {
    for (double x : g.v)
        if (x != 0.0) return false;
    return true;
}

ParamVector shift_by(const ParamVector& theta, const GradVector& eps) {
    ParamVector out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) out[i] = theta[i] + eps[i];
    return out;
}

template <typename F>
void parallel_for_indices(std::size_t n, std::size_t threads, F&& fn) {
    if (threads == 0) threads = 1;
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
        try {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!err) err = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::maml: return "maml";
        case Algorithm::sharpmaml: return "sharpmaml";
        case Algorithm::dgs: return "dgs";
    }
    return "?";
}

const char* optimizer_name(MetaOptimizer o) {
    return o == MetaOptimizer::sgd ? "sgd" : "adam";
}

const char* adapt_mode_name(AdaptMode m) {
    return m == AdaptMode::per_task_clone ? "per_task_clone" : "sequential_literal";
}

Algorithm algorithm_from_name(const std::string& s) {
    if (s == "maml") return Algorithm::maml;
    if (s == "sharpmaml") return Algorithm::sharpmaml;
    if (s == "dgs") return Algorithm::dgs;
    throw std::invalid_argument("unknown algorithm \"" + s + "\" (expected maml, sharpmaml, or dgs)");
}

MetaOptimizer optimizer_from_name(const std::string& s) {
    if (s == "sgd") return MetaOptimizer::sgd;
    if (s == "adam") return MetaOptimizer::adam;
    throw std::invalid_argument("unknown optimizer \"" + s + "\" (expected sgd or adam)");
}

AdaptMode adapt_mode_from_name(const std::string& s) {
    if (s == "per_task_clone") return AdaptMode::per_task_clone;
    if (s == "sequential_literal") return AdaptMode::sequential_literal;
    throw std::invalid_argument("unknown adapt mode \"" + s +
                                "\" (expected per_task_clone or sequential_literal)");
}

CountingObjective::CountingObjective(std::shared_ptr<const Objective> base,
                                     std::shared_ptr<EvalCounter> counter)
    : base_(std::move(base)), counter_(std::move(counter)) {
    if (!base_ || !counter_) throw std::invalid_argument("CountingObjective: null base or counter");
}

LossGrad CountingObjective::eval(const ParamVector& theta) const {
    counter_->grads.fetch_add(1, std::memory_order_relaxed);
    return base_->eval(theta);
}

double CountingObjective::value(const ParamVector& theta) const {
    counter_->values.fetch_add(1, std::memory_order_relaxed);
    return base_->value(theta);
}

// ---------------------------------------------------------------------------
// Task streams

void TaskStream::fold_hash(std::uint64_t bits) {
    // FNV-1a 64 over the little-endian bytes, continuing the running digest.
    for (int i = 0; i < 8; ++i) {
        hash_ ^= (bits >> (8 * i)) & 0xff;
        hash_ *= 0x100000001b3ull;
    }
}

void TaskStream::fold_hash(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    fold_hash(bits);
}

void TaskStream::fold_hash(const std::vector<double>& vs) {
    for (double v : vs) fold_hash(v);
}

void TaskStream::fold_batch(const LabeledBatch& batch) {
    fold_hash(batch.x.data);
    fold_hash(batch.y.data);
    for (int label : batch.labels) fold_hash(static_cast<std::uint64_t>(label));
}

SinusoidStream::SinusoidStream(MlpSpec spec, std::size_t k_shot, std::size_t q_query,
                               std::uint64_t seed, std::size_t budget)
    : spec_(std::move(spec)), k_shot_(k_shot), q_query_(q_query), seed_(seed), budget_(budget) {
    spec_.validate();
    if (spec_.input_dim() != 1 || spec_.output_dim() != 1 || spec_.head != Head::regression)
        throw std::invalid_argument("SinusoidStream: needs a 1-in/1-out regression network, got " +
                                    spec_.canonical_string());
    if (k_shot_ < 1 || q_query_ < 1)
        throw std::invalid_argument("SinusoidStream: k_shot and q_query must be >= 1");
}

std::optional<std::vector<MetaTask>> SinusoidStream::next_batch(std::size_t m) {
    if (m == 0) throw std::invalid_argument("next_batch: m must be >= 1");
    if (budget_ != 0 && issued_ + m > budget_) return std::nullopt;
    std::vector<MetaTask> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i, ++issued_) {
        TaskBatch tb = sinusoid_task(k_shot_, q_query_, split_seed(seed_, issued_));
        fold_batch(tb.support);
        fold_batch(tb.query);
        MetaTask task;
        task.support = std::make_shared<MlpTaskObjective>(spec_, std::move(tb.support));
        task.query = std::make_shared<MlpTaskObjective>(spec_, std::move(tb.query));
        task.desc = std::move(tb.desc);
        out.push_back(std::move(task));
    }
    return out;
}

BlobStream::BlobStream(MlpSpec spec, EpisodeSpec episode, std::size_t input_dim, double separation,
                       std::uint64_t seed, std::size_t budget)
    : spec_(std::move(spec)), episode_(episode), input_dim_(input_dim), separation_(separation),
      seed_(seed), budget_(budget) {
    spec_.validate();
    episode_.validate(true);
    if (input_dim_ == 0) throw std::invalid_argument("BlobStream: input_dim must be >= 1");
    if (spec_.input_dim() != input_dim_ || spec_.output_dim() != episode_.n_way ||
        spec_.head != Head::classification)
        throw std::invalid_argument("BlobStream: network " + spec_.canonical_string() +
                                    " does not match " + std::to_string(input_dim_) + "-dim " +
                                    std::to_string(episode_.n_way) + "-way episodes");
}

std::optional<std::vector<MetaTask>> BlobStream::next_batch(std::size_t m) {
    if (m == 0) throw std::invalid_argument("next_batch: m must be >= 1");
    if (budget_ != 0 && issued_ + m > budget_) return std::nullopt;
    std::vector<MetaTask> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i, ++issued_) {
        EpisodeSpec ep = episode_;
        ep.seed = split_seed(seed_, issued_);
        TaskBatch tb = blob_classification_task(ep, input_dim_, separation_);
        fold_batch(tb.support);
        fold_batch(tb.query);
        MetaTask task;
        task.support = std::make_shared<MlpTaskObjective>(spec_, std::move(tb.support));
        task.query = std::make_shared<MlpTaskObjective>(spec_, std::move(tb.query));
        task.desc = std::move(tb.desc);
        out.push_back(std::move(task));
    }
    return out;
}

QuadraticStream::QuadraticStream(std::size_t dim, double curv_lo, double curv_hi, double center_scale,
                                 double jitter, std::uint64_t seed, std::size_t budget)
    : dim_(dim), curv_lo_(curv_lo), curv_hi_(curv_hi), center_scale_(center_scale), jitter_(jitter),
      seed_(seed), budget_(budget) {
    if (dim_ == 0) throw std::invalid_argument("QuadraticStream: dim must be >= 1");
    if (!(curv_lo_ > 0.0) || !(curv_hi_ >= curv_lo_))
        throw std::invalid_argument("QuadraticStream: need 0 < curv_lo <= curv_hi");
    if (center_scale_ < 0.0 || jitter_ < 0.0)
        throw std::invalid_argument("QuadraticStream: center_scale and jitter must be >= 0");
}

std::optional<std::vector<MetaTask>> QuadraticStream::next_batch(std::size_t m) {
    if (m == 0) throw std::invalid_argument("next_batch: m must be >= 1");
    if (budget_ != 0 && issued_ + m > budget_) return std::nullopt;
    std::vector<MetaTask> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i, ++issued_) {
        std::mt19937_64 rng(split_seed(seed_, issued_));
        std::uniform_real_distribution<double> curv_d(curv_lo_, curv_hi_);
        std::uniform_real_distribution<double> cen_d(-center_scale_, center_scale_);
        std::uniform_real_distribution<double> jit_d(-jitter_, jitter_);
        std::vector<double> curv(dim_), mu(dim_), sup(dim_), qry(dim_);
        for (double& c : curv) c = curv_lo_ == curv_hi_ ? curv_lo_ : curv_d(rng);
        for (double& c : mu) c = center_scale_ == 0.0 ? 0.0 : cen_d(rng);
        for (std::size_t j = 0; j < dim_; ++j) sup[j] = mu[j] + (jitter_ == 0.0 ? 0.0 : jit_d(rng));
        for (std::size_t j = 0; j < dim_; ++j) qry[j] = mu[j] + (jitter_ == 0.0 ? 0.0 : jit_d(rng));
        fold_hash(curv);
        fold_hash(sup);
        fold_hash(qry);
        MetaTask task;
        task.support = std::make_shared<QuadraticObjective>(curv, std::move(sup));
        task.query = std::make_shared<QuadraticObjective>(std::move(curv), std::move(qry));
        task.desc.family = "quadratic";
        task.desc.seed = split_seed(seed_, issued_);
        task.desc.centers = std::move(mu);
        out.push_back(std::move(task));
    }
    return out;
}

DatasetStream::DatasetStream(std::shared_ptr<const Dataset> data, MlpSpec spec, EpisodeSpec episode,
                             std::uint64_t seed, std::size_t budget)
    : data_(std::move(data)), spec_(std::move(spec)), episode_(episode), seed_(seed), budget_(budget) {
    if (!data_) throw std::invalid_argument("DatasetStream: null dataset");
    data_->validate();
    spec_.validate();
    episode_.validate(true);
    if (spec_.input_dim() != data_->features.cols() || spec_.output_dim() != episode_.n_way ||
        spec_.head != Head::classification)
        throw std::invalid_argument("DatasetStream: network " + spec_.canonical_string() +
                                    " does not match " + std::to_string(data_->features.cols()) +
                                    "-dim " + std::to_string(episode_.n_way) + "-way episodes");
}

std::optional<std::vector<MetaTask>> DatasetStream::next_batch(std::size_t m) {
    if (m == 0) throw std::invalid_argument("next_batch: m must be >= 1");
    if (budget_ != 0 && issued_ + m > budget_) return std::nullopt;
    std::vector<MetaTask> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i, ++issued_) {
        EpisodeSpec ep = episode_;
        ep.seed = split_seed(seed_, issued_);
        TaskBatch tb = episode_from_dataset(*data_, ep);
        fold_batch(tb.support);
        fold_batch(tb.query);
        MetaTask task;
        task.support = std::make_shared<MlpTaskObjective>(spec_, std::move(tb.support));
        task.query = std::make_shared<MlpTaskObjective>(spec_, std::move(tb.query));
        task.desc = std::move(tb.desc);
        out.push_back(std::move(task));
    }
    return out;
}

FixedStream::FixedStream(std::vector<MetaTask> tasks, bool cycle)
    : tasks_(std::move(tasks)), cycle_(cycle) {
    for (const auto& t : tasks_)
        if (!t.support || !t.query) throw std::invalid_argument("FixedStream: task with null objective");
}

std::size_t FixedStream::dim() const { return tasks_.empty() ? 0 : tasks_[0].support->dim(); }

std::optional<std::vector<MetaTask>> FixedStream::next_batch(std::size_t m) {
    if (m == 0) throw std::invalid_argument("next_batch: m must be >= 1");
    if (tasks_.empty()) return std::nullopt;
    if (!cycle_ && pos_ + m > tasks_.size()) return std::nullopt;
    std::vector<MetaTask> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        fold_hash(static_cast<std::uint64_t>(pos_));
        out.push_back(tasks_[pos_]);
        if (++pos_ == tasks_.size() && cycle_) pos_ = 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inner loops

void MetaConfig::validate() const { sharp.validate(); }

AdaptResult maml_inner_adapt(const Objective& obj, ParamVector theta, const SharpnessConfig& cfg) {
    auto view = maybe_clipped(borrow(obj), cfg.clip_c);
    AdaptResult out;
    out.last_eps = GradVector(theta.size());
    const double beta = cfg.inner_rate();
    for (int s = 0; s < cfg.inner_steps; ++s) {
        const LossGrad lg = view->eval(theta);
        out.last_support_loss = lg.loss;
        sgd_step(theta, lg.grad, beta);
        ++out.steps_taken;
    }
    out.theta = std::move(theta);
    return out;
}

AdaptResult sam_inner_adapt(const Objective& obj, ParamVector theta, const SharpnessConfig& cfg) {
    auto view = maybe_clipped(borrow(obj), cfg.clip_c);
    AdaptResult out;
    out.last_eps = GradVector(theta.size());
    const double beta = cfg.inner_rate();
    for (int s = 0; s < cfg.inner_steps; ++s) {
        const LossGrad lg = view->eval(theta);
        out.last_support_loss = lg.loss;
        GradVector eps = sam_perturbation(lg.grad, cfg.alpha_inner);
        if (is_zero(eps)) {
            sgd_step(theta, lg.grad, beta); // zero ascent radius: plain descent
        } else {
            const LossGrad at_probe = view->eval(shift_by(theta, eps));
            sgd_step(theta, at_probe.grad, beta);
        }
        out.last_eps = std::move(eps);
        ++out.steps_taken;
    }
    out.theta = std::move(theta);
    return out;
}

AdaptResult sagm_inner_adapt(const Objective& obj, ParamVector theta, const SharpnessConfig& cfg) {
    auto view = maybe_clipped(borrow(obj), cfg.clip_c);
    AdaptResult out;
    out.last_eps = GradVector(theta.size());
    const double beta = cfg.inner_rate();
    const bool no_probe = cfg.alpha_inner == 0.0 && cfg.delta == 0.0;
    for (int s = 0; s < cfg.inner_steps; ++s) {
        if (no_probe) {
            // probe point coincides with theta, so the matched direction is 2g
            const LossGrad lg = view->eval(theta);
            out.last_support_loss = lg.loss;
            GradVector dir(theta.size());
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = lg.grad[i] + lg.grad[i];
            sgd_step(theta, dir, beta);
            out.last_eps = GradVector(theta.size());
        } else {
            const GmEval gm = gm_loss(*view, theta, cfg.alpha_inner, cfg.delta);
            out.last_support_loss = gm.loss;
            sgd_step(theta, gm.direction, beta);
            out.last_eps = gm.eps;
        }
        ++out.steps_taken;
    }
    out.theta = std::move(theta);
    return out;
}

AdaptResult inner_adapt(Algorithm algo, const Objective& obj, ParamVector theta,
                        const SharpnessConfig& cfg) {
    switch (algo) {
        case Algorithm::maml: return maml_inner_adapt(obj, std::move(theta), cfg);
        case Algorithm::sharpmaml: return sam_inner_adapt(obj, std::move(theta), cfg);
        case Algorithm::dgs: return sagm_inner_adapt(obj, std::move(theta), cfg);
    }
    throw std::logic_error("inner_adapt: bad algorithm");
}

// ---------------------------------------------------------------------------
// Outer step

namespace {

struct OuterContext {
    const std::vector<std::shared_ptr<const Objective>>& query;
    const std::vector<AdaptResult>& ad;
    const SharpnessConfig& sc;
    std::size_t threads;
};

// Fills the shared diagnostic columns from per-task evaluations at the
// adapted parameters (q) and at the probe points (pe). The alpha/delta == 0
// fast path sets the exact identities instead of recomputing them.
void fill_diagnostics(MetaStepReport& rep, const std::vector<LossGrad>& q,
                      const std::vector<LossGrad>* pe, double eps_norm) {
    const std::size_t d = q[0].grad.size();
    GradVector g_sum(d);
    double loss_sum = 0.0;
    for (const auto& e : q) {
        axpy(1.0, e.grad.v, g_sum.v);
        loss_sum += e.loss;
    }
    rep.outer_loss = loss_sum;
    rep.grad_norm_sq = dot(g_sum, g_sum);
    rep.outer_eps_norm = eps_norm;
    if (pe == nullptr) { // exact fast path
        rep.perturbed_grad_norm = l2_norm(g_sum);
        rep.surrogate_gap = 0.0;
        rep.align_cos = 1.0;
        return;
    }
    GradVector gp_sum(d);
    double loss_p_sum = 0.0;
    for (const auto& e : *pe) {
        axpy(1.0, e.grad.v, gp_sum.v);
        loss_p_sum += e.loss;
    }
    rep.perturbed_grad_norm = l2_norm(gp_sum);
    rep.surrogate_gap = loss_p_sum - loss_sum;
    rep.align_cos = alignment_cosine(g_sum, gp_sum);
}

GradVector outer_maml(const OuterContext& ctx, MetaStepReport& rep) {
    const std::size_t M = ctx.ad.size(), d = ctx.ad[0].theta.size();
    std::vector<LossGrad> q(M);
    parallel_for_indices(M, ctx.threads,
                         [&](std::size_t m) { q[m] = ctx.query[m]->eval(ctx.ad[m].theta); });
    GradVector direction(d);
    for (const auto& e : q) axpy(1.0, e.grad.v, direction.v);

    const bool fast = ctx.sc.alpha_outer == 0.0 && ctx.sc.delta == 0.0;
    if (fast) {
        fill_diagnostics(rep, q, nullptr, 0.0);
        return direction;
    }
    // No inner perturbation was taken, so the aggregated ascent gradient is
    // the plain aggregated gradient.
    const GradVector eps = sam_perturbation(direction, ctx.sc.alpha_outer);
    std::vector<LossGrad> pe(M);
    parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
        const ParamVector p = probe_with_eps(ctx.ad[m].theta, eps, q[m].grad, ctx.sc.delta);
        pe[m] = ctx.query[m]->eval(p);
    });
    fill_diagnostics(rep, q, &pe, l2_norm(eps));
    return direction;
}

GradVector outer_sharpmaml(const OuterContext& ctx, MetaStepReport& rep) {
    const std::size_t M = ctx.ad.size(), d = ctx.ad[0].theta.size();
    // Gradients at the inner ascent points theta'_m + eps_m drive the outer
    // perturbation; tasks whose inner loop took no perturbation contribute
    // their plain query gradient (same point, single evaluation).
    std::vector<LossGrad> g1(M), q(M);
    std::vector<char> q_done(M, 0);
    parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
        if (is_zero(ctx.ad[m].last_eps)) {
            q[m] = ctx.query[m]->eval(ctx.ad[m].theta);
            g1[m] = q[m];
            q_done[m] = 1;
        } else {
            g1[m] = ctx.query[m]->eval(shift_by(ctx.ad[m].theta, ctx.ad[m].last_eps));
        }
    });
    GradVector g1_sum(d);
    for (const auto& e : g1) axpy(1.0, e.grad.v, g1_sum.v);
    const GradVector eps = sam_perturbation(g1_sum, ctx.sc.alpha_outer);

    // Descent gradients at the doubly perturbed points theta'_m + eps_m + eps.
    std::vector<GradVector> dg(M);
    if (is_zero(eps)) {
        for (std::size_t m = 0; m < M; ++m) dg[m] = g1[m].grad;
    } else {
        parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
            const ParamVector b = shift_by(shift_by(ctx.ad[m].theta, ctx.ad[m].last_eps), eps);
            dg[m] = ctx.query[m]->eval(b).grad;
        });
    }
    GradVector direction(d);
    for (const auto& g : dg) axpy(1.0, g.v, direction.v);

    // Shared diagnostics at the adapted parameters.
    parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
        if (!q_done[m]) q[m] = ctx.query[m]->eval(ctx.ad[m].theta);
    });
    const bool fast = ctx.sc.alpha_outer == 0.0 && ctx.sc.delta == 0.0;
    if (fast) {
        fill_diagnostics(rep, q, nullptr, 0.0);
        return direction;
    }
    std::vector<LossGrad> pe(M);
    parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
        const ParamVector p = probe_with_eps(ctx.ad[m].theta, eps, q[m].grad, ctx.sc.delta);
        pe[m] = ctx.query[m]->eval(p);
    });
    fill_diagnostics(rep, q, &pe, l2_norm(eps));
    return direction;
}

GradVector outer_dgs(const OuterContext& ctx, MetaStepReport& rep) {
    const std::size_t M = ctx.ad.size(), d = ctx.ad[0].theta.size();
    std::vector<LossGrad> g1(M), q(M);
    parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
        q[m] = ctx.query[m]->eval(ctx.ad[m].theta);
        g1[m] = is_zero(ctx.ad[m].last_eps)
                    ? q[m]
                    : ctx.query[m]->eval(shift_by(ctx.ad[m].theta, ctx.ad[m].last_eps));
    });
    GradVector g1_sum(d);
    for (const auto& e : g1) axpy(1.0, e.grad.v, g1_sum.v);
    const GradVector eps = sam_perturbation(g1_sum, ctx.sc.alpha_outer);

    // The probe evaluations are the algorithm's own outer quantities; the
    // trace diagnostics come for free. When both knobs are zero the probe is
    // the adapted point itself and q is reused.
    const bool fast = ctx.sc.alpha_outer == 0.0 && ctx.sc.delta == 0.0;
    std::vector<LossGrad> pe(M);
    if (fast) {
        for (std::size_t m = 0; m < M; ++m) pe[m] = q[m];
    } else {
        parallel_for_indices(M, ctx.threads, [&](std::size_t m) {
            const ParamVector p = probe_with_eps(ctx.ad[m].theta, eps, q[m].grad, ctx.sc.delta);
            pe[m] = ctx.query[m]->eval(p);
        });
    }
    GradVector g_sum(d), gp_sum(d);
    for (const auto& e : q) axpy(1.0, e.grad.v, g_sum.v);
    for (const auto& e : pe) axpy(1.0, e.grad.v, gp_sum.v);
    GradVector direction(d);
    for (std::size_t i = 0; i < d; ++i) direction[i] = g_sum[i] + gp_sum[i];

    fill_diagnostics(rep, q, fast ? nullptr : &pe, l2_norm(eps));
    return direction;
}

} // namespace

MetaStepReport meta_step(const std::vector<MetaTask>& tasks, ParamVector& theta,
                         const MetaConfig& cfg, OptState& state) {
    cfg.validate();
    if (tasks.empty()) throw std::invalid_argument("meta_step: empty task batch");
    for (std::size_t m = 0; m < tasks.size(); ++m) {
        if (!tasks[m].support || !tasks[m].query)
            throw std::invalid_argument("meta_step: task " + std::to_string(m) + " has a null objective");
        if (tasks[m].support->dim() != theta.size() || tasks[m].query->dim() != theta.size())
            throw std::invalid_argument("meta_step: task " + std::to_string(m) + " dimension " +
                                        std::to_string(tasks[m].support->dim()) + " != " +
                                        std::to_string(theta.size()));
    }
    const auto start = std::chrono::steady_clock::now();
    const std::size_t M = tasks.size();
    const SharpnessConfig& sc = cfg.sharp;
    const bool sequential = cfg.adapt_mode == AdaptMode::sequential_literal;
    const std::size_t threads = sequential ? 1 : cfg.threads;

    MetaStepReport rep;
    rep.t = static_cast<std::size_t>(state.t);

    std::vector<std::shared_ptr<const Objective>> query(M);
    for (std::size_t m = 0; m < M; ++m) query[m] = maybe_clipped(tasks[m].query, sc.clip_c);

    std::vector<AdaptResult> ad(M);
    if (sequential) {
        ParamVector cur = theta;
        for (std::size_t m = 0; m < M; ++m) {
            ad[m] = inner_adapt(cfg.algo, *tasks[m].support, cur, sc);
            cur = ad[m].theta;
        }
    } else {
        parallel_for_indices(M, threads, [&](std::size_t m) {
            ad[m] = inner_adapt(cfg.algo, *tasks[m].support, theta, sc);
        });
    }
    if (sc.inner_steps > 0) {
        rep.inner_losses.resize(M);
        for (std::size_t m = 0; m < M; ++m) rep.inner_losses[m] = ad[m].last_support_loss;
    }
    rep.inner_eps_norms.resize(M);
    for (std::size_t m = 0; m < M; ++m) rep.inner_eps_norms[m] = l2_norm(ad[m].last_eps);

    const OuterContext ctx{query, ad, sc, threads};
    GradVector direction;
    switch (cfg.algo) {
        case Algorithm::maml: direction = outer_maml(ctx, rep); break;
        case Algorithm::sharpmaml: direction = outer_sharpmaml(ctx, rep); break;
        case Algorithm::dgs: direction = outer_dgs(ctx, rep); break;
    }

    if (cfg.optimizer == MetaOptimizer::sgd) {
        sgd_step(theta, direction, sc.gamma);
    } else {
        adam_step(theta, direction, sc.gamma, state.adam);
    }
    state.t += 1;

    if (cfg.measure_time) {
        const auto end = std::chrono::steady_clock::now();
        rep.step_ns = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(end - start).count());
    }
    return rep;
}

RunTrace train(TaskStream& stream, ParamVector& theta, const MetaConfig& cfg, std::size_t meta_batch,
               std::size_t steps, const StepCallback& on_step) {
    cfg.validate();
    if (meta_batch == 0) throw std::invalid_argument("train: meta_batch must be >= 1");
    if (stream.dim() != theta.size())
        throw std::invalid_argument("train: stream dimension " + std::to_string(stream.dim()) +
                                    " != parameter dimension " + std::to_string(theta.size()));
    RunTrace trace;
    trace.steps.reserve(steps);
    OptState state;
    for (std::size_t t = 0; t < steps; ++t) {
        auto batch = stream.next_batch(meta_batch);
        if (!batch) break; // stream exhausted: return the partial trace
        MetaStepReport rep = meta_step(*batch, theta, cfg, state);
        if (on_step) on_step(rep, theta);
        trace.steps.push_back(std::move(rep));
    }
    return trace;
}

EvalSummary evaluate(TaskStream& stream, const ParamVector& theta, const MetaConfig& cfg,
                     std::size_t n_tasks) {
    cfg.validate();
    if (stream.dim() != theta.size())
        throw std::invalid_argument("evaluate: stream dimension " + std::to_string(stream.dim()) +
                                    " != parameter dimension " + std::to_string(theta.size()));
    EvalSummary out;
    for (std::size_t i = 0; i < n_tasks; ++i) {
        auto batch = stream.next_batch(1);
        if (!batch) break;
        const MetaTask& task = (*batch)[0];
        const AdaptResult ad = inner_adapt(cfg.algo, *task.support, theta, cfg.sharp);
        out.task_losses.push_back(task.query->value(ad.theta));
    }
    if (!out.task_losses.empty()) {
        out.mean = std::accumulate(out.task_losses.begin(), out.task_losses.end(), 0.0) /
                   static_cast<double>(out.task_losses.size());
        out.median = median_of(out.task_losses);
    }
    return out;
}

MetaObjective::MetaObjective(std::vector<MetaTask> tasks, Algorithm algo, SharpnessConfig sharp)
    : tasks_(std::move(tasks)), algo_(algo), sharp_(sharp) {
    sharp_.validate();
    if (tasks_.empty()) throw std::invalid_argument("MetaObjective: no tasks");
    for (const auto& t : tasks_)
        if (!t.support || !t.query) throw std::invalid_argument("MetaObjective: null task objective");
    dim_ = tasks_.front().support->dim();
    for (const auto& t : tasks_)
        if (t.support->dim() != dim_ || t.query->dim() != dim_)
            throw std::invalid_argument("MetaObjective: task dimensions disagree");
}

LossGrad MetaObjective::eval(const ParamVector& theta) const {
    if (theta.size() != dim_)
        throw std::invalid_argument("MetaObjective: parameter dimension mismatch");
    LossGrad total;
    total.loss = 0.0;
    total.grad = GradVector(dim_);
    for (const auto& task : tasks_) {
        const AdaptResult ad = inner_adapt(algo_, *task.support, theta, sharp_);
        const auto q = maybe_clipped(task.query, sharp_.clip_c);
        const LossGrad lg = q->eval(ad.theta);
        total.loss += lg.loss;
        for (std::size_t i = 0; i < dim_; ++i) total.grad[i] += lg.grad[i];
    }
    return total;
}

double MetaObjective::value(const ParamVector& theta) const {
    if (theta.size() != dim_)
        throw std::invalid_argument("MetaObjective: parameter dimension mismatch");
    double total = 0.0;
    for (const auto& task : tasks_) {
        const AdaptResult ad = inner_adapt(algo_, *task.support, theta, sharp_);
        const auto q = maybe_clipped(task.query, sharp_.clip_c);
        total += q->value(ad.theta);
    }
    return total;
}

} // namespace metasharp
