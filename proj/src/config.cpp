#include "metasharp/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace metasharp {

namespace {

using njson = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

void check_keys(const njson& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) fail("unknown key \"" + prefix + it.key() + "\"");
    }
}

const njson* find(const njson& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_double(const njson& obj, const std::string& prefix, const char* key, double dflt) {
    const njson* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number()) fail("key \"" + prefix + key + "\" must be a number");
    return v->get<double>();
}

std::uint64_t get_u64(const njson& obj, const std::string& prefix, const char* key,
                      std::uint64_t dflt) {
    const njson* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
        fail("key \"" + prefix + key + "\" must be a nonnegative integer");
    return v->get<std::uint64_t>();
}

std::size_t get_size(const njson& obj, const std::string& prefix, const char* key,
                     std::size_t dflt) {
    return static_cast<std::size_t>(get_u64(obj, prefix, key, dflt));
}

bool get_bool(const njson& obj, const std::string& prefix, const char* key, bool dflt) {
    const njson* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean()) fail("key \"" + prefix + key + "\" must be a boolean");
    return v->get<bool>();
}

std::string get_string(const njson& obj, const std::string& prefix, const char* key,
                       const std::string& dflt) {
    const njson* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_string()) fail("key \"" + prefix + key + "\" must be a string");
    return v->get<std::string>();
}

std::vector<double> get_double_list(const njson& obj, const std::string& prefix, const char* key,
                                    std::vector<double> dflt) {
    const njson* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_array()) fail("key \"" + prefix + key + "\" must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
        if (!e.is_number()) fail("key \"" + prefix + key + "\" must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<std::size_t> get_size_list(const njson& obj, const std::string& prefix, const char* key,
                                       std::vector<std::size_t> dflt) {
    const njson* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_array()) fail("key \"" + prefix + key + "\" must be an array of nonnegative integers");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
        if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0))
            fail("key \"" + prefix + key + "\" must be an array of nonnegative integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_act;
    fail("unknown activation \"" + s + "\" (expected relu or tanh)");
}

template <typename Parse>
auto parse_name(const std::string& prefix, const char* key, const std::string& s, Parse parse) {
    try {
        return parse(s);
    } catch (const std::invalid_argument& e) {
        fail("key \"" + prefix + key + "\": " + e.what());
    }
}

} // namespace

const char* task_source_name(TaskSource s) {
    switch (s) {
        case TaskSource::sinusoid: return "sinusoid";
        case TaskSource::blobs: return "blobs";
        case TaskSource::quadratic: return "quadratic";
        case TaskSource::idx: return "idx";
    }
    return "?";
}

TaskSource task_source_from_name(const std::string& s) {
    if (s == "sinusoid") return TaskSource::sinusoid;
    if (s == "blobs") return TaskSource::blobs;
    if (s == "quadratic") return TaskSource::quadratic;
    if (s == "idx") return TaskSource::idx;
    throw std::invalid_argument("unknown task source \"" + s +
                                "\" (expected sinusoid, blobs, quadratic, or idx)");
}

void TaskConfig::validate() const {
    switch (source) {
        case TaskSource::sinusoid:
            if (k_shot < 1 || q_query < 1) fail("task: k_shot and q_query must be >= 1");
            break;
        case TaskSource::blobs:
            if (k_shot < 1 || q_query < 1) fail("task: k_shot and q_query must be >= 1");
            if (n_way < 2) fail("task: n_way must be >= 2");
            if (input_dim < 1) fail("task: input_dim must be >= 1");
            if (!(separation > 0.0)) fail("task: separation must be > 0");
            break;
        case TaskSource::quadratic:
            if (dim < 1) fail("task: dim must be >= 1");
            if (!(curv_lo > 0.0) || !(curv_hi >= curv_lo))
                fail("task: need 0 < curv_lo <= curv_hi");
            if (center_scale < 0.0 || jitter < 0.0)
                fail("task: center_scale and jitter must be >= 0");
            break;
        case TaskSource::idx:
            if (k_shot < 1 || q_query < 1) fail("task: k_shot and q_query must be >= 1");
            if (n_way < 2) fail("task: n_way must be >= 2");
            if (images.empty() || labels.empty()) fail("task: idx source needs images and labels paths");
            if (max_features < 1) fail("task: max_features must be >= 1");
            break;
    }
}

void BoundConfig::validate() const {
    if (U < 0.0) fail("bounds: U must be >= 0");
    if (!(psi > 0.0) || !(psi < 1.0)) fail("bounds: psi must be in (0,1)");
    if (sigma_p_sq < 0.0) fail("bounds: sigma_p_sq must be >= 0 (0 = smallest admissible)");
    if (sigma1_sq < 0.0 || sigma2_sq < 0.0) fail("bounds: variance bounds must be >= 0");
    if (L_star < 0.0) fail("bounds: L_star must be >= 0");
}

void ExperimentConfig::validate() const {
    if (steps < 1) fail("steps must be >= 1");
    if (meta_batch < 1) fail("meta_batch must be >= 1");
    if (threads < 1) fail("threads must be >= 1");
    if (out.empty()) fail("out must be nonempty");
    task.validate();
    if (task.source != TaskSource::quadratic) {
        if (hidden.empty()) fail("model: hidden must be nonempty");
        for (std::size_t h : hidden)
            if (h < 1) fail("model: hidden layer sizes must be >= 1");
    }
    try {
        sharp.validate();
    } catch (const std::invalid_argument& e) {
        fail(std::string("sharpness: ") + e.what());
    }
    // Grid values are deliberately not range-checked here: each sweep cell
    // validates its own radii, and a bad cell is marked failed without
    // aborting the rest of the grid.
    bounds.validate();
}

MlpSpec ExperimentConfig::mlp_spec(std::size_t idx_feature_dim) const {
    MlpSpec spec;
    spec.activation = activation;
    switch (task.source) {
        case TaskSource::sinusoid:
            spec.head = Head::regression;
            spec.layer_sizes.push_back(1);
            for (std::size_t h : hidden) spec.layer_sizes.push_back(h);
            spec.layer_sizes.push_back(1);
            break;
        case TaskSource::blobs:
            spec.head = Head::classification;
            spec.layer_sizes.push_back(task.input_dim);
            for (std::size_t h : hidden) spec.layer_sizes.push_back(h);
            spec.layer_sizes.push_back(task.n_way);
            break;
        case TaskSource::idx:
            if (idx_feature_dim == 0)
                throw std::invalid_argument("mlp_spec: idx tasks need the loaded feature count");
            spec.head = Head::classification;
            spec.layer_sizes.push_back(idx_feature_dim);
            for (std::size_t h : hidden) spec.layer_sizes.push_back(h);
            spec.layer_sizes.push_back(task.n_way);
            break;
        case TaskSource::quadratic:
            throw std::invalid_argument("mlp_spec: quadratic tasks have no network");
    }
    return spec;
}

MetaConfig ExperimentConfig::meta_config() const {
    MetaConfig mc;
    mc.algo = algorithm;
    mc.sharp = sharp;
    mc.optimizer = optimizer;
    mc.adapt_mode = mode;
    mc.threads = threads;
    mc.measure_time = measure_time;
    return mc;
}

ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin) {
    njson root;
    try {
        root = njson::parse(text);
    } catch (const njson::parse_error& e) {
        fail(origin + ": " + e.what());
    }
    if (!root.is_object()) fail(origin + ": top level must be an object");

    check_keys(root, "",
               {"algorithm", "optimizer", "mode", "seed", "steps", "meta_batch", "threads",
                "measure_time", "checkpoint_every", "eval_episodes", "out", "task", "model",
                "sharpness", "sweep", "compare", "bounds"});

    ExperimentConfig cfg;
    cfg.algorithm = parse_name("", "algorithm", get_string(root, "", "algorithm", "dgs"),
                               algorithm_from_name);
    cfg.optimizer = parse_name("", "optimizer", get_string(root, "", "optimizer", "sgd"),
                               optimizer_from_name);
    cfg.mode = parse_name("", "mode", get_string(root, "", "mode", "per_task_clone"),
                          adapt_mode_from_name);
    cfg.seed = get_u64(root, "", "seed", cfg.seed);
    cfg.steps = get_size(root, "", "steps", cfg.steps);
    cfg.meta_batch = get_size(root, "", "meta_batch", cfg.meta_batch);
    cfg.threads = get_size(root, "", "threads", cfg.threads);
    cfg.measure_time = get_bool(root, "", "measure_time", cfg.measure_time);
    cfg.checkpoint_every = get_size(root, "", "checkpoint_every", cfg.checkpoint_every);
    cfg.eval_episodes = get_size(root, "", "eval_episodes", cfg.eval_episodes);
    cfg.out = get_string(root, "", "out", cfg.out);

    if (const njson* t = find(root, "task")) {
        if (!t->is_object()) fail("key \"task\" must be an object");
        check_keys(*t, "task.",
                   {"source", "k_shot", "q_query", "n_way", "input_dim", "separation", "dim",
                    "curv_lo", "curv_hi", "center_scale", "jitter", "images", "labels",
                    "max_features"});
        cfg.task.source = parse_name("task.", "source",
                                     get_string(*t, "task.", "source", "sinusoid"),
                                     task_source_from_name);
        cfg.task.k_shot = get_size(*t, "task.", "k_shot", cfg.task.k_shot);
        cfg.task.q_query = get_size(*t, "task.", "q_query", cfg.task.q_query);
        cfg.task.n_way = get_size(*t, "task.", "n_way", cfg.task.n_way);
        cfg.task.input_dim = get_size(*t, "task.", "input_dim", cfg.task.input_dim);
        cfg.task.separation = get_double(*t, "task.", "separation", cfg.task.separation);
        cfg.task.dim = get_size(*t, "task.", "dim", cfg.task.dim);
        cfg.task.curv_lo = get_double(*t, "task.", "curv_lo", cfg.task.curv_lo);
        cfg.task.curv_hi = get_double(*t, "task.", "curv_hi", cfg.task.curv_hi);
        cfg.task.center_scale = get_double(*t, "task.", "center_scale", cfg.task.center_scale);
        cfg.task.jitter = get_double(*t, "task.", "jitter", cfg.task.jitter);
        cfg.task.images = get_string(*t, "task.", "images", cfg.task.images);
        cfg.task.labels = get_string(*t, "task.", "labels", cfg.task.labels);
        cfg.task.max_features = get_size(*t, "task.", "max_features", cfg.task.max_features);
    }

    if (const njson* m = find(root, "model")) {
        if (!m->is_object()) fail("key \"model\" must be an object");
        check_keys(*m, "model.", {"hidden", "activation"});
        cfg.hidden = get_size_list(*m, "model.", "hidden", cfg.hidden);
        cfg.activation = activation_from_name(get_string(*m, "model.", "activation", "tanh"));
    }

    if (const njson* s = find(root, "sharpness")) {
        if (!s->is_object()) fail("key \"sharpness\" must be an object");
        check_keys(*s, "sharpness.",
                   {"alpha_inner", "alpha_outer", "delta", "gamma", "beta", "inner_steps",
                    "clip_c"});
        cfg.sharp.alpha_inner = get_double(*s, "sharpness.", "alpha_inner", cfg.sharp.alpha_inner);
        cfg.sharp.alpha_outer = get_double(*s, "sharpness.", "alpha_outer", cfg.sharp.alpha_outer);
        cfg.sharp.delta = get_double(*s, "sharpness.", "delta", cfg.sharp.delta);
        cfg.sharp.gamma = get_double(*s, "sharpness.", "gamma", cfg.sharp.gamma);
        cfg.sharp.beta = get_double(*s, "sharpness.", "beta", cfg.sharp.beta);
        const njson* steps = find(*s, "inner_steps");
        if (steps) {
            if (!steps->is_number_integer())
                fail("key \"sharpness.inner_steps\" must be an integer");
            cfg.sharp.inner_steps = steps->get<int>();
        }
        cfg.sharp.clip_c = get_double(*s, "sharpness.", "clip_c", cfg.sharp.clip_c);
    }

    if (const njson* w = find(root, "sweep")) {
        if (!w->is_object()) fail("key \"sweep\" must be an object");
        check_keys(*w, "sweep.", {"delta_grid", "alpha_grid"});
        cfg.delta_grid = get_double_list(*w, "sweep.", "delta_grid", cfg.delta_grid);
        cfg.alpha_grid = get_double_list(*w, "sweep.", "alpha_grid", cfg.alpha_grid);
    }

    if (const njson* c = find(root, "compare")) {
        if (!c->is_object()) fail("key \"compare\" must be an object");
        check_keys(*c, "compare.", {"algorithms"});
        const njson* algos = find(*c, "algorithms");
        if (algos) {
            if (!algos->is_array()) fail("key \"compare.algorithms\" must be an array of names");
            for (const auto& a : *algos) {
                if (!a.is_string()) fail("key \"compare.algorithms\" must be an array of names");
                cfg.compare_algorithms.push_back(parse_name("compare.", "algorithms",
                                                            a.get<std::string>(),
                                                            algorithm_from_name));
            }
        }
    }

    if (const njson* b = find(root, "bounds")) {
        if (!b->is_object()) fail("key \"bounds\" must be an object");
        check_keys(*b, "bounds.",
                   {"U", "psi", "sigma_p_sq", "sigma1_sq", "sigma2_sq", "L_star"});
        cfg.bounds.U = get_double(*b, "bounds.", "U", cfg.bounds.U);
        cfg.bounds.psi = get_double(*b, "bounds.", "psi", cfg.bounds.psi);
        cfg.bounds.sigma_p_sq = get_double(*b, "bounds.", "sigma_p_sq", cfg.bounds.sigma_p_sq);
        cfg.bounds.sigma1_sq = get_double(*b, "bounds.", "sigma1_sq", cfg.bounds.sigma1_sq);
        cfg.bounds.sigma2_sq = get_double(*b, "bounds.", "sigma2_sq", cfg.bounds.sigma2_sq);
        cfg.bounds.L_star = get_double(*b, "bounds.", "L_star", cfg.bounds.L_star);
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return config_from_json_text(ss.str(), path);
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    njson root;
    root["algorithm"] = algorithm_name(cfg.algorithm);
    root["optimizer"] = optimizer_name(cfg.optimizer);
    root["mode"] = adapt_mode_name(cfg.mode);
    root["seed"] = cfg.seed;
    root["steps"] = cfg.steps;
    root["meta_batch"] = cfg.meta_batch;
    root["threads"] = cfg.threads;
    root["measure_time"] = cfg.measure_time;
    root["checkpoint_every"] = cfg.checkpoint_every;
    root["eval_episodes"] = cfg.eval_episodes;
    root["out"] = cfg.out;

    njson task;
    task["source"] = task_source_name(cfg.task.source);
    task["k_shot"] = cfg.task.k_shot;
    task["q_query"] = cfg.task.q_query;
    task["n_way"] = cfg.task.n_way;
    task["input_dim"] = cfg.task.input_dim;
    task["separation"] = cfg.task.separation;
    task["dim"] = cfg.task.dim;
    task["curv_lo"] = cfg.task.curv_lo;
    task["curv_hi"] = cfg.task.curv_hi;
    task["center_scale"] = cfg.task.center_scale;
    task["jitter"] = cfg.task.jitter;
    task["images"] = cfg.task.images;
    task["labels"] = cfg.task.labels;
    task["max_features"] = cfg.task.max_features;
    root["task"] = std::move(task);

    njson model;
    model["hidden"] = cfg.hidden;
    model["activation"] = activation_name(cfg.activation);
    root["model"] = std::move(model);

    njson sharp;
    sharp["alpha_inner"] = cfg.sharp.alpha_inner;
    sharp["alpha_outer"] = cfg.sharp.alpha_outer;
    sharp["delta"] = cfg.sharp.delta;
    sharp["gamma"] = cfg.sharp.gamma;
    sharp["beta"] = cfg.sharp.beta;
    sharp["inner_steps"] = cfg.sharp.inner_steps;
    sharp["clip_c"] = cfg.sharp.clip_c;
    root["sharpness"] = std::move(sharp);

    njson sweep;
    sweep["delta_grid"] = cfg.delta_grid;
    sweep["alpha_grid"] = cfg.alpha_grid;
    root["sweep"] = std::move(sweep);

    njson compare;
    njson algos = njson::array();
    for (Algorithm a : cfg.compare_algorithms) algos.push_back(algorithm_name(a));
    compare["algorithms"] = std::move(algos);
    root["compare"] = std::move(compare);

    njson bounds;
    bounds["U"] = cfg.bounds.U;
    bounds["psi"] = cfg.bounds.psi;
    bounds["sigma_p_sq"] = cfg.bounds.sigma_p_sq;
    bounds["sigma1_sq"] = cfg.bounds.sigma1_sq;
    bounds["sigma2_sq"] = cfg.bounds.sigma2_sq;
    bounds["L_star"] = cfg.bounds.L_star;
    root["bounds"] = std::move(bounds);

    return root.dump(2) + "\n";
}

} // namespace metasharp
