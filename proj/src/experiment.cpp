#include "metasharp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "metasharp/param_io.hpp"
#include "metasharp/theory.hpp"

namespace fs = std::filesystem;

namespace metasharp {

const char* const kTraceFile = "trace.csv";
const char* const kParamsFile = "params.bin";
const char* const kCheckpointsFile = "checkpoints.bin";
const char* const kManifestFile = "manifest.json";
const char* const kSweepFile = "sweep.csv";
const char* const kCompareFile = "compare.json";
const char* const kBoundsFile = "bounds.json";
const char* const kSweepCsvHeader =
    "delta,alpha,status,final_query_loss,final_query_accuracy,mean_h,mean_align_cos";

namespace {

using njson = nlohmann::ordered_json;

// Seed-space tag separating held-out evaluation episodes from training ones.
constexpr std::uint64_t kEvalSeedTag = 0x6576616cull;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex_hash(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double median_sorted_copy(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::unique_ptr<TaskStream> build_stream(const ExperimentConfig& cfg, std::uint64_t seed,
                                         const std::shared_ptr<const Dataset>& data) {
    switch (cfg.task.source) {
        case TaskSource::sinusoid:
            return std::make_unique<SinusoidStream>(cfg.mlp_spec(), cfg.task.k_shot,
                                                    cfg.task.q_query, seed);
        case TaskSource::blobs: {
            EpisodeSpec ep;
            ep.n_way = cfg.task.n_way;
            ep.k_shot = cfg.task.k_shot;
            ep.q_query = cfg.task.q_query;
            return std::make_unique<BlobStream>(cfg.mlp_spec(), ep, cfg.task.input_dim,
                                                cfg.task.separation, seed);
        }
        case TaskSource::quadratic:
            return std::make_unique<QuadraticStream>(cfg.task.dim, cfg.task.curv_lo,
                                                     cfg.task.curv_hi, cfg.task.center_scale,
                                                     cfg.task.jitter, seed);
        case TaskSource::idx: {
            if (!data) throw std::runtime_error("build_stream: idx dataset not loaded");
            EpisodeSpec ep;
            ep.n_way = cfg.task.n_way;
            ep.k_shot = cfg.task.k_shot;
            ep.q_query = cfg.task.q_query;
            return std::make_unique<DatasetStream>(data, cfg.mlp_spec(data->features.cols()), ep,
                                                   seed);
        }
    }
    throw std::runtime_error("build_stream: unhandled task source");
}

std::shared_ptr<const Dataset> maybe_load_dataset(const ExperimentConfig& cfg) {
    if (cfg.task.source != TaskSource::idx) return nullptr;
    return std::make_shared<Dataset>(
        dataset_from_idx(cfg.task.images, cfg.task.labels, cfg.task.max_features));
}

bool is_classification(const ExperimentConfig& cfg) {
    return cfg.task.source == TaskSource::blobs || cfg.task.source == TaskSource::idx;
}

void write_text_file(const fs::path& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

njson config_json(const ExperimentConfig& cfg) { return njson::parse(config_to_json_text(cfg)); }

double column_mean(const std::vector<double>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; exceptions propagate.
void parallel_cells(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t w = std::min(threads, n);
    pool.reserve(w);
    for (std::size_t i = 0; i < w; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

double RunResult::mean_surrogate_gap() const { return column_mean(trace.column_surrogate_gap()); }
double RunResult::mean_align_cos() const { return column_mean(trace.column_align_cos()); }

std::unique_ptr<TaskStream> make_train_stream(const ExperimentConfig& cfg) {
    return build_stream(cfg, cfg.seed, maybe_load_dataset(cfg));
}

std::unique_ptr<TaskStream> make_eval_stream(const ExperimentConfig& cfg) {
    return build_stream(cfg, split_seed(cfg.seed, kEvalSeedTag), maybe_load_dataset(cfg));
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto data = maybe_load_dataset(cfg);
    auto train_stream = build_stream(cfg, cfg.seed, data);
    auto eval_stream = build_stream(cfg, split_seed(cfg.seed, kEvalSeedTag), data);

    RunResult r;
    r.dim = train_stream->dim();

    ParamVector theta;
    if (cfg.task.source == TaskSource::quadratic) {
        // The quadratic family needs no symmetry breaking; training starts at
        // the origin so runs are parameter-free reproducible.
        theta = ParamVector(r.dim);
        r.spec_hash = fnv1a("quadratic:dim=" + std::to_string(r.dim));
    } else {
        const MlpSpec spec = cfg.mlp_spec(data ? data->features.cols() : 0);
        theta = init_params(spec, cfg.seed);
        r.spec_hash = spec.spec_hash();
    }

    const MetaConfig mc = cfg.meta_config();
    const std::size_t every = cfg.checkpoint_every;
    if (every > 0) r.checkpoints.push_back(theta);
    StepCallback on_step;
    if (every > 0)
        on_step = [&r, every](const MetaStepReport& rep, const ParamVector& th) {
            if ((rep.t + 1) % every == 0) r.checkpoints.push_back(th);
        };
    r.trace = train(*train_stream, theta, mc, cfg.meta_batch, cfg.steps, on_step);
    r.theta = theta;
    r.train_episode_hash = train_stream->episode_hash();
    if (every > 0 && r.checkpoints.back().v != theta.v) r.checkpoints.push_back(theta);

    if (cfg.eval_episodes > 0) {
        const bool classify = is_classification(cfg);
        for (std::size_t i = 0; i < cfg.eval_episodes; ++i) {
            auto batch = eval_stream->next_batch(1);
            if (!batch) break;
            const MetaTask& task = (*batch)[0];
            const AdaptResult ad = inner_adapt(mc.algo, *task.support, theta, mc.sharp);
            r.eval.task_losses.push_back(task.query->value(ad.theta));
            if (!classify) continue;
            auto q = std::dynamic_pointer_cast<const MlpTaskObjective>(task.query);
            if (!q) continue;
            const Tensor logits = mlp_forward(q->spec(), ad.theta, q->batch().x);
            const std::vector<int>& labels = q->batch().labels;
            std::size_t hits = 0;
            for (std::size_t row = 0; row < logits.rows(); ++row) {
                std::size_t arg = 0;
                for (std::size_t c = 1; c < logits.cols(); ++c)
                    if (logits.at(row, c) > logits.at(row, arg)) arg = c;
                if (static_cast<int>(arg) == labels[row]) ++hits;
            }
            r.error_rates.push_back(1.0 - static_cast<double>(hits) /
                                              static_cast<double>(logits.rows()));
        }
        if (!r.eval.task_losses.empty()) {
            r.eval.mean = column_mean(r.eval.task_losses);
            r.eval.median = median_sorted_copy(r.eval.task_losses);
        }
        if (classify && !r.error_rates.empty()) r.accuracy = 1.0 - column_mean(r.error_rates);
        r.eval_episode_hash = eval_stream->episode_hash();
    }
    return r;
}

namespace {

njson result_json(const ExperimentConfig& cfg, const RunResult& r) {
    njson res;
    res["trace_steps"] = r.trace.steps.size();
    res["early_stop"] = r.trace.steps.size() < cfg.steps;
    res["eval_episodes"] = r.eval.task_losses.size();
    res["final_query_loss_mean"] = r.eval.mean;
    res["final_query_loss_median"] = r.eval.median;
    if (r.accuracy)
        res["final_query_accuracy"] = *r.accuracy;
    else
        res["final_query_accuracy"] = nullptr;
    res["mean_surrogate_gap"] = r.mean_surrogate_gap();
    res["mean_align_cos"] = r.mean_align_cos();
    std::uint64_t total_ns = 0;
    for (const auto& s : r.trace.steps) total_ns += s.step_ns;
    res["total_step_ns"] = total_ns;
    return res;
}

njson model_json(const ExperimentConfig& cfg, const RunResult& r) {
    njson m;
    if (cfg.task.source == TaskSource::quadratic) {
        m["description"] = "quadratic:dim=" + std::to_string(r.dim);
        m["init"] = "origin";
    } else {
        // Reconstructing the spec string needs the idx feature count, which
        // only the run knew; the parameter count pins it equally well.
        m["description"] = "mlp";
        m["init"] = init_scheme_description();
    }
    m["param_count"] = r.dim;
    m["spec_hash"] = hex_hash(r.spec_hash);
    return m;
}

} // namespace

void cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path out(cfg.out);
    fs::create_directories(out);

    const RunResult r = run_experiment(cfg);
    save_trace_csv((out / kTraceFile).string(), r.trace);
    save_params((out / kParamsFile).string(), r.theta, r.spec_hash);
    if (cfg.checkpoint_every > 0)
        save_checkpoints((out / kCheckpointsFile).string(), r.checkpoints, r.spec_hash);

    njson manifest;
    manifest["command"] = "train";
    manifest["config"] = config_json(cfg);
    manifest["model"] = model_json(cfg, r);
    njson artifacts;
    artifacts["trace"] = kTraceFile;
    artifacts["params"] = kParamsFile;
    if (cfg.checkpoint_every > 0)
        artifacts["checkpoints"] = kCheckpointsFile;
    else
        artifacts["checkpoints"] = nullptr;
    manifest["artifacts"] = std::move(artifacts);
    njson episodes;
    episodes["train_hash"] = hex_hash(r.train_episode_hash);
    episodes["eval_hash"] = hex_hash(r.eval_episode_hash);
    manifest["episodes"] = std::move(episodes);
    manifest["results"] = result_json(cfg, r);
    write_text_file(out / kManifestFile, manifest.dump(2) + "\n");
}

void cmd_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.delta_grid.empty())
        throw ConfigError("config: sweep requires a nonempty sweep.delta_grid");
    const std::vector<double> alphas =
        cfg.alpha_grid.empty() ? std::vector<double>{cfg.sharp.alpha_outer} : cfg.alpha_grid;
    const fs::path out(cfg.out);
    fs::create_directories(out);

    struct Cell {
        double delta = 0.0, alpha = 0.0;
        bool ok = false;
        double loss = std::numeric_limits<double>::quiet_NaN();
        double accuracy = std::numeric_limits<double>::quiet_NaN();
        double mean_h = std::numeric_limits<double>::quiet_NaN();
        double mean_cos = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<Cell> cells(cfg.delta_grid.size() * alphas.size());

    parallel_cells(cells.size(), cfg.threads, [&](std::size_t i) {
        Cell& cell = cells[i];
        cell.delta = cfg.delta_grid[i / alphas.size()];
        cell.alpha = alphas[i % alphas.size()];
        ExperimentConfig c = cfg;
        c.sharp.delta = cell.delta;
        // The swept radius applies at both levels: one alpha knob per cell.
        c.sharp.alpha_inner = cell.alpha;
        c.sharp.alpha_outer = cell.alpha;
        c.threads = 1;       // cells are the unit of parallelism
        c.measure_time = false;
        try {
            const RunResult r = run_experiment(c);
            cell.loss = r.eval.mean;
            if (r.accuracy) cell.accuracy = *r.accuracy;
            cell.mean_h = r.mean_surrogate_gap();
            cell.mean_cos = r.mean_align_cos();
            cell.ok = true;
        } catch (const std::exception&) {
            cell.ok = false; // marked failed in the table; the sweep continues
        }
    });

    std::string csv = std::string(kSweepCsvHeader) + "\n";
    for (const Cell& cell : cells) {
        csv += fmt_double(cell.delta);
        csv += ',';
        csv += fmt_double(cell.alpha);
        csv += ',';
        csv += cell.ok ? "ok" : "failed";
        csv += ',';
        csv += fmt_double(cell.loss);
        csv += ',';
        csv += fmt_double(cell.accuracy);
        csv += ',';
        csv += fmt_double(cell.mean_h);
        csv += ',';
        csv += fmt_double(cell.mean_cos);
        csv += '\n';
    }
    write_text_file(out / kSweepFile, csv);

    njson manifest;
    manifest["command"] = "sweep";
    manifest["config"] = config_json(cfg);
    manifest["rows"] = cells.size();
    manifest["artifacts"] = njson{{"sweep", kSweepFile}};
    write_text_file(out / kManifestFile, manifest.dump(2) + "\n");
}

void cmd_compare(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.compare_algorithms.size() < 2)
        throw ConfigError("config: compare requires >= 2 entries in compare.algorithms");
    const fs::path out(cfg.out);
    fs::create_directories(out);

    struct Entry {
        Algorithm algo;
        RunResult result;
        double median_step_ns = 0.0;
        std::string trace_file;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < cfg.compare_algorithms.size(); ++i) {
        ExperimentConfig c = cfg;
        c.algorithm = cfg.compare_algorithms[i];
        c.measure_time = true; // step-time ratios are the point of the report
        Entry e;
        e.algo = c.algorithm;
        e.result = run_experiment(c);
        std::vector<double> ns;
        ns.reserve(e.result.trace.steps.size());
        for (const auto& s : e.result.trace.steps) ns.push_back(static_cast<double>(s.step_ns));
        e.median_step_ns = median_sorted_copy(std::move(ns));
        e.trace_file = "trace_" + std::to_string(i) + "_" + algorithm_name(e.algo) + ".csv";
        save_trace_csv((out / e.trace_file).string(), e.result.trace);
        entries.push_back(std::move(e));
    }
    for (const Entry& e : entries)
        if (e.result.train_episode_hash != entries.front().result.train_episode_hash)
            throw std::runtime_error("compare: algorithms consumed different episode streams");

    njson report;
    report["command"] = "compare";
    report["config"] = config_json(cfg);
    njson episodes;
    episodes["train_hash"] = hex_hash(entries.front().result.train_episode_hash);
    episodes["eval_hash"] = hex_hash(entries.front().result.eval_episode_hash);
    report["episodes"] = std::move(episodes);
    njson algos = njson::array();
    const double base_ns = entries.front().median_step_ns;
    for (const Entry& e : entries) {
        njson a;
        a["algorithm"] = algorithm_name(e.algo);
        a["final_query_loss_mean"] = e.result.eval.mean;
        a["final_query_loss_median"] = e.result.eval.median;
        if (e.result.accuracy)
            a["final_query_accuracy"] = *e.result.accuracy;
        else
            a["final_query_accuracy"] = nullptr;
        a["median_step_ns"] = e.median_step_ns;
        a["step_time_ratio_vs_first"] = base_ns > 0.0 ? e.median_step_ns / base_ns
                                                      : std::numeric_limits<double>::quiet_NaN();
        a["trace"] = e.trace_file;
        algos.push_back(std::move(a));
    }
    report["algorithms"] = std::move(algos);
    write_text_file(out / kCompareFile, report.dump(2) + "\n");
}

void cmd_bounds(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path out(cfg.out);
    const RunTrace trace = load_trace_csv((out / kTraceFile).string());
    if (trace.steps.empty()) throw std::runtime_error("bounds: trace has no steps");
    const LoadedCheckpoints ckpts = load_checkpoints((out / kCheckpointsFile).string());
    if (ckpts.thetas.size() < 2)
        throw std::runtime_error("bounds: need at least 2 checkpoints to estimate constants");

    // The constants are measured on the same function the outer loop descends:
    // the first-order meta loss over the run's first meta-batch.
    const auto data = maybe_load_dataset(cfg);
    auto stream = build_stream(cfg, cfg.seed, data);
    auto batch = stream->next_batch(cfg.meta_batch);
    if (!batch) throw std::runtime_error("bounds: episode stream is empty");
    std::vector<std::shared_ptr<const Objective>> objectives{
        std::make_shared<MetaObjective>(*batch, cfg.algorithm, cfg.sharp)};
    const ConstantEstimates est = estimate_constants(objectives, ckpts.thetas);

    const std::size_t d = ckpts.thetas.front().size();
    BoundInputs bi;
    bi.C = est.c_hat;
    bi.d = d;
    bi.L_lip = est.l_hat;
    bi.alpha = cfg.sharp.alpha_outer;
    bi.delta = cfg.sharp.delta;
    bi.gamma = cfg.sharp.gamma;
    bi.T = trace.steps.size();
    bi.L0 = trace.steps.front().outer_loss;
    bi.L_star = cfg.bounds.L_star;

    std::vector<double> gns = trace.column_grad_norm_sq();
    const double lhs_avg = column_mean(gns);

    njson records = njson::array();
    auto push_record = [&records](const std::string& name, double lhs, double rhs, njson inputs) {
        njson rec;
        rec["name"] = name;
        rec["lhs"] = lhs;
        rec["rhs"] = rhs;
        rec["margin"] = rhs - lhs;
        rec["inputs"] = std::move(inputs);
        records.push_back(std::move(rec));
    };

    njson common;
    common["C"] = bi.C;
    common["d"] = d;
    common["L_lip"] = bi.L_lip;
    common["alpha"] = bi.alpha;
    common["delta"] = bi.delta;
    common["gamma"] = bi.gamma;
    common["T"] = bi.T;
    common["L0"] = bi.L0;
    common["L_star"] = bi.L_star;

    push_record("convergence_bound", lhs_avg, convergence_bound_rhs(bi), common);
    {
        BoundInputs bs = bi;
        bs.sigma1_sq = cfg.bounds.sigma1_sq;
        bs.sigma2_sq = cfg.bounds.sigma2_sq;
        njson inputs = common;
        inputs["sigma1_sq"] = bs.sigma1_sq;
        inputs["sigma2_sq"] = bs.sigma2_sq;
        push_record("stochastic_convergence_bound", lhs_avg, stochastic_convergence_bound_rhs(bs),
                    inputs);
    }

    const StepBoundReport sbr = step_bound_report(trace, est.c_hat, d, cfg.sharp.alpha_outer,
                                                  cfg.sharp.delta, cfg.bounds.sigma1_sq,
                                                  cfg.bounds.sigma2_sq);
    for (const BoundCheck* chk :
         {&sbr.perturbed_grad, &sbr.surrogate_grad_sq, &sbr.noisy_surrogate_grad_sq}) {
        njson inputs = common;
        inputs["k"] = sbr.k;
        inputs["worst_step"] = chk->worst_step;
        push_record(chk->name, chk->worst_lhs, chk->rhs, inputs);
    }

    // PAC-Bayes record over held-out episodes; classification uses error
    // rates, regression caps each loss at 1 so the bounded-loss assumption
    // holds for the reported quantity.
    const double v = cfg.sharp.alpha_outer * cfg.sharp.alpha_outer +
                     cfg.sharp.delta * cfg.sharp.delta;
    njson notes = njson::array();
    if (v > 0.0 && cfg.eval_episodes > 0) {
        auto eval_stream = build_stream(cfg, split_seed(cfg.seed, kEvalSeedTag), data);
        const MetaConfig mc = cfg.meta_config();
        const ParamVector& theta_hat = ckpts.thetas.back();
        std::vector<double> losses;
        const bool classify = is_classification(cfg);
        for (std::size_t i = 0; i < cfg.eval_episodes; ++i) {
            auto b = eval_stream->next_batch(1);
            if (!b) break;
            const MetaTask& task = (*b)[0];
            const AdaptResult ad = inner_adapt(mc.algo, *task.support, theta_hat, mc.sharp);
            if (classify) {
                auto q = std::dynamic_pointer_cast<const MlpTaskObjective>(task.query);
                if (!q) continue;
                const Tensor logits = mlp_forward(q->spec(), ad.theta, q->batch().x);
                std::size_t hits = 0;
                for (std::size_t row = 0; row < logits.rows(); ++row) {
                    std::size_t arg = 0;
                    for (std::size_t c = 1; c < logits.cols(); ++c)
                        if (logits.at(row, c) > logits.at(row, arg)) arg = c;
                    if (static_cast<int>(arg) == q->batch().labels[row]) ++hits;
                }
                losses.push_back(1.0 -
                                 static_cast<double>(hits) / static_cast<double>(logits.rows()));
            } else {
                losses.push_back(std::min(1.0, task.query->value(ad.theta)));
            }
        }
        if (!losses.empty()) {
            PacInputs pi;
            pi.theta_hat = theta_hat;
            pi.alpha = cfg.sharp.alpha_outer;
            pi.delta = cfg.sharp.delta;
            pi.sigma_p_sq = cfg.bounds.sigma_p_sq > 0.0
                                ? cfg.bounds.sigma_p_sq
                                : min_prior_variance(cfg.sharp.alpha_outer, cfg.sharp.delta);
            pi.K = losses.size();
            pi.psi = cfg.bounds.psi;
            pi.U = cfg.bounds.U;
            pi.losses = losses;
            const double bound = pac_bound(pi);
            njson inputs;
            inputs["K"] = pi.K;
            inputs["psi"] = pi.psi;
            inputs["U"] = pi.U;
            inputs["sigma_p_sq"] = pi.sigma_p_sq;
            inputs["kl"] = kl_gaussians(pi.theta_hat, pi.sigma_p_sq, pi.alpha, pi.delta);
            inputs["mean_empirical_loss"] = column_mean(losses);
            // For this record lhs is the empirical term and rhs the certified
            // level, so margin is the complexity + stability allowance.
            push_record("pac_bayes", column_mean(losses), bound, inputs);
        } else {
            notes.push_back("pac_bayes skipped: evaluation stream yielded no episodes");
        }
    } else {
        notes.push_back(
            "pac_bayes skipped: needs alpha_outer^2 + delta^2 > 0 and eval_episodes > 0");
    }

    njson report;
    report["command"] = "bounds";
    report["config"] = config_json(cfg);
    njson constants;
    constants["c_hat"] = est.c_hat;
    constants["l_hat"] = est.l_hat;
    constants["k"] = sbr.k;
    report["constants"] = std::move(constants);
    report["records"] = std::move(records);
    report["notes"] = std::move(notes);
    write_text_file(out / kBoundsFile, report.dump(2) + "\n");
}

} // namespace metasharp
