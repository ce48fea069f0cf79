#include "metasharp/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "metasharp/idx_io.hpp"

namespace metasharp {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void EpisodeSpec::validate(bool classification) const {
    if (classification && n_way < 2)
        throw std::invalid_argument("EpisodeSpec: n_way must be >= 2, got " + std::to_string(n_way));
    if (k_shot < 1) throw std::invalid_argument("EpisodeSpec: k_shot must be >= 1");
    if (q_query < 1) throw std::invalid_argument("EpisodeSpec: q_query must be >= 1");
}

TaskBatch sinusoid_task(std::size_t k_shot, std::size_t q_query, std::uint64_t seed) {
    if (k_shot < 1 || q_query < 1)
        throw std::invalid_argument("sinusoid_task: k_shot and q_query must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp_d(0.1, 5.0);
    std::uniform_real_distribution<double> phase_d(0.0, kPi);
    std::uniform_real_distribution<double> x_d(-5.0, 5.0);

    TaskBatch task;
    task.desc.family = "sinusoid";
    task.desc.seed = seed;
    task.desc.amplitude = amp_d(rng);
    task.desc.phase = phase_d(rng);

    auto fill = [&](LabeledBatch& b, std::size_t n) {
        std::vector<double> xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = x_d(rng);
            ys[i] = task.desc.amplitude * std::sin(xs[i] + task.desc.phase);
        }
        b.x = Tensor::matrix(n, 1, std::move(xs));
        b.y = Tensor::matrix(n, 1, std::move(ys));
    };
    fill(task.support, k_shot);
    fill(task.query, q_query);
    return task;
}

TaskBatch blob_classification_task(const EpisodeSpec& spec, std::size_t dim, double separation) {
    spec.validate(true);
    if (dim == 0) throw std::invalid_argument("blob_classification_task: dim must be >= 1");
    if (!(separation > 0.0)) throw std::invalid_argument("blob_classification_task: separation must be > 0");

    std::mt19937_64 rng(spec.seed);
    // Centers live in a box wide enough to hold n_way balls of the requested
    // separation; rejection sampling with a retry cap keeps this bounded.
    const double box = std::max(1.0, separation) * (1.0 + std::cbrt(static_cast<double>(spec.n_way)));
    std::uniform_real_distribution<double> center_d(-box, box);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<double> centers;
    const int max_retries = 10000;
    int retries = 0;
    while (centers.size() < spec.n_way * dim) {
        std::vector<double> cand(dim);
        for (double& c : cand) c = center_d(rng);
        bool ok = true;
        for (std::size_t k = 0; k < centers.size() / dim; ++k) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double dd = cand[j] - centers[k * dim + j];
                d2 += dd * dd;
            }
            if (std::sqrt(d2) < separation) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.insert(centers.end(), cand.begin(), cand.end());
        } else if (++retries > max_retries) {
            throw std::runtime_error("blob_classification_task: could not place " +
                                     std::to_string(spec.n_way) + " centers at separation " +
                                     std::to_string(separation) + " after " + std::to_string(max_retries) +
                                     " retries");
        }
    }

    TaskBatch task;
    task.desc.family = "blobs";
    task.desc.seed = spec.seed;
    task.desc.centers = centers;

    auto fill = [&](LabeledBatch& b, std::size_t per_class) {
        const std::size_t n = per_class * spec.n_way;
        std::vector<double> xs(n * dim);
        b.labels.resize(n);
        std::size_t row = 0;
        for (std::size_t c = 0; c < spec.n_way; ++c) {
            for (std::size_t i = 0; i < per_class; ++i, ++row) {
                for (std::size_t j = 0; j < dim; ++j)
                    xs[row * dim + j] = centers[c * dim + j] + noise(rng);
                b.labels[row] = static_cast<int>(c);
            }
        }
        b.x = Tensor::matrix(n, dim, std::move(xs));
    };
    fill(task.support, spec.k_shot);
    fill(task.query, spec.q_query);
    return task;
}

void Dataset::validate() const {
    if (features.rank() != 2) throw std::invalid_argument("Dataset: features must be [n, d]");
    if (labels.size() != features.rows())
        throw std::invalid_argument("Dataset: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(features.rows()) + " rows");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= n_classes)
            throw std::invalid_argument("Dataset: label " + std::to_string(l) + " outside [0, " +
                                        std::to_string(n_classes) + ")");
}

Tensor mean_pool_images(const Tensor& images, std::size_t max_features) {
    if (images.rank() != 3)
        throw std::invalid_argument("mean_pool_images: expected [n, h, w], got " + images.shape_string());
    if (max_features == 0) throw std::invalid_argument("mean_pool_images: max_features must be >= 1");
    std::size_t n = images.shape[0], h = images.shape[1], w = images.shape[2];
    std::vector<double> cur = images.data;
    while (h * w > max_features) {
        if (h < 2 || w < 2)
            throw std::invalid_argument("mean_pool_images: cannot pool " + std::to_string(h) + "x" +
                                        std::to_string(w) + " below " + std::to_string(max_features) +
                                        " features");
        const std::size_t h2 = h / 2, w2 = w / 2;
        std::vector<double> next(n * h2 * w2);
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t r = 0; r < h2; ++r)
                for (std::size_t c = 0; c < w2; ++c) {
                    const std::size_t base = img * h * w;
                    const double s = cur[base + (2 * r) * w + 2 * c] + cur[base + (2 * r) * w + 2 * c + 1] +
                                     cur[base + (2 * r + 1) * w + 2 * c] +
                                     cur[base + (2 * r + 1) * w + 2 * c + 1];
                    next[img * h2 * w2 + r * w2 + c] = s / 4.0;
                }
        cur = std::move(next);
        h = h2;
        w = w2;
    }
    return Tensor::matrix(n, h * w, std::move(cur));
}

Dataset dataset_from_idx(const std::string& images_path, const std::string& labels_path,
                         std::size_t max_features) {
    IdxData images = load_idx(images_path);
    IdxData labels = load_idx(labels_path);
    if (images.dims.size() != 3)
        throw std::runtime_error("dataset_from_idx: image file must be rank 3 [n, h, w], got rank " +
                                 std::to_string(images.dims.size()));
    if (labels.dims.size() != 1)
        throw std::runtime_error("dataset_from_idx: label file must be rank 1, got rank " +
                                 std::to_string(labels.dims.size()));
    if (images.dims[0] != labels.dims[0])
        throw std::runtime_error("dataset_from_idx: " + std::to_string(images.dims[0]) + " images vs " +
                                 std::to_string(labels.dims[0]) + " labels");

    Dataset out;
    out.features = mean_pool_images(Tensor(images.dims, std::move(images.values)), max_features);
    out.labels.resize(labels.values.size());
    int max_label = 0;
    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        // label files carry scaled bytes; undo the pixel scaling
        const int l = static_cast<int>(std::lround(labels.values[i] * 255.0));
        out.labels[i] = l;
        max_label = std::max(max_label, l);
    }
    out.n_classes = static_cast<std::size_t>(max_label) + 1;
    out.validate();
    return out;
}

TaskBatch episode_from_dataset(const Dataset& data, const EpisodeSpec& spec) {
    data.validate();
    spec.validate(true);
    if (spec.n_way > data.n_classes)
        throw std::invalid_argument("episode_from_dataset: n_way " + std::to_string(spec.n_way) +
                                    " exceeds dataset classes " + std::to_string(data.n_classes));

    std::vector<std::vector<std::size_t>> by_class(data.n_classes);
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> class_order(data.n_classes);
    std::iota(class_order.begin(), class_order.end(), std::size_t{0});
    std::shuffle(class_order.begin(), class_order.end(), rng);

    const std::size_t need = spec.k_shot + spec.q_query;
    const std::size_t dim = data.features.cols();
    TaskBatch task;
    task.desc.family = "dataset";
    task.desc.seed = spec.seed;

    const std::size_t ns = spec.n_way * spec.k_shot, nq = spec.n_way * spec.q_query;
    std::vector<double> sx(ns * dim), qx(nq * dim);
    task.support.labels.resize(ns);
    task.query.labels.resize(nq);

    for (std::size_t c = 0; c < spec.n_way; ++c) {
        const std::size_t cls = class_order[c];
        auto& pool = by_class[cls];
        if (pool.size() < need)
            throw std::runtime_error("episode_from_dataset: class " + std::to_string(cls) + " has " +
                                     std::to_string(pool.size()) + " examples, episode needs " +
                                     std::to_string(need));
        std::vector<std::size_t> picks = pool;
        std::shuffle(picks.begin(), picks.end(), rng);
        for (std::size_t i = 0; i < spec.k_shot; ++i) {
            const std::size_t row = c * spec.k_shot + i;
            const double* src = data.features.data.data() + picks[i] * dim;
            std::copy(src, src + dim, sx.begin() + row * dim);
            task.support.labels[row] = static_cast<int>(c);
        }
        for (std::size_t i = 0; i < spec.q_query; ++i) {
            const std::size_t row = c * spec.q_query + i;
            const double* src = data.features.data.data() + picks[spec.k_shot + i] * dim;
            std::copy(src, src + dim, qx.begin() + row * dim);
            task.query.labels[row] = static_cast<int>(c);
        }
    }
    task.support.x = Tensor::matrix(ns, dim, std::move(sx));
    task.query.x = Tensor::matrix(nq, dim, std::move(qx));
    return task;
}

} // namespace metasharp
