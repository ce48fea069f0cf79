#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metasharp/mlp.hpp"
#include "metasharp/tensor.hpp"

namespace metasharp {

/// Episode shape: n_way classes (or 1 for regression families), k_shot
/// support and q_query query examples per class, plus the episode seed.
struct EpisodeSpec {
    std::size_t n_way = 2;
    std::size_t k_shot = 5;
    std::size_t q_query = 5;
    std::uint64_t seed = 0;

    void validate(bool classification) const;
};

struct TaskDescriptor {
    std::string family;
    std::uint64_t seed = 0;
    double amplitude = 0.0;  // sinusoid
    double phase = 0.0;      // sinusoid
    std::vector<double> centers;  // blobs, row-major [n_way, dim]
};

/// Few-shot task: disjoint support and query batches from one underlying
/// generator draw, plus the descriptor that reproduces it.
struct TaskBatch {
    LabeledBatch support;
    LabeledBatch query;
    TaskDescriptor desc;
};

/// Sine regression episode: amplitude U[0.1, 5], phase U[0, pi], inputs
/// U[-5, 5], targets amplitude * sin(x + phase). Deterministic in seed.
TaskBatch sinusoid_task(std::size_t k_shot, std::size_t q_query, std::uint64_t seed);

/// Gaussian blob classification episode: n_way unit-variance clusters in
/// dim dimensions with centers at pairwise distance >= separation (rejection
/// sampled; throws after bounded retries if the packing is infeasible).
/// Support has exactly k_shot examples per class, query q_query per class.
TaskBatch blob_classification_task(const EpisodeSpec& spec, std::size_t dim, double separation);

/// Flat feature dataset with integer class labels in [0, n_classes).
struct Dataset {
    Tensor features;  // [n, feature_dim]
    std::vector<int> labels;
    std::size_t n_classes = 0;

    void validate() const;
};

/// Mean-pools square images [n, side, side] by factor 2 until the flattened
/// feature count is <= max_features; returns [n, features].
Tensor mean_pool_images(const Tensor& images, std::size_t max_features);

/// Builds a dataset from IDX image and label files, flattening (and pooling
/// to <= max_features) the images into rows.
Dataset dataset_from_idx(const std::string& images_path, const std::string& labels_path,
                         std::size_t max_features);

/// N-way K-shot episode sampled from a dataset: n_way distinct classes,
/// k_shot + q_query distinct examples per class split disjointly, labels
/// remapped to [0, n_way). Deterministic in spec.seed; throws naming any
/// class with too few examples.
TaskBatch episode_from_dataset(const Dataset& data, const EpisodeSpec& spec);

} // namespace metasharp
