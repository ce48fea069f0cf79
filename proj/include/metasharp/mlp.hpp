#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metasharp/autodiff.hpp"
#include "metasharp/params.hpp"
#include "metasharp/tensor.hpp"

namespace metasharp {

enum class Activation { relu, tanh_act };
enum class Head { regression, classification };

/// Fully connected network description. layer_sizes runs input..output;
/// the head is mean squared error for regression or softmax cross-entropy
/// over layer_sizes.back() classes.
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::relu;
    Head head = Head::regression;

    void validate() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    /// Total parameter count: sum of in*out + out over consecutive layers.
    std::size_t param_count() const;
    /// Canonical text form, hashed into saved parameter headers.
    std::string canonical_string() const;
    std::uint64_t spec_hash() const;
};

/// One labeled batch. x is [n, input_dim]; regression targets are
/// [n, output_dim], classification targets are integer labels.
struct LabeledBatch {
    Tensor x;
    Tensor y;                 // regression targets
    std::vector<int> labels;  // classification targets
    std::size_t size() const { return x.rank() == 2 ? x.rows() : 0; }
};

/// Scalar loss plus its parameter gradient, produced by one evaluation.
struct LossGrad {
    double loss = 0.0;
    GradVector grad;
};

std::string activation_name(Activation a);
std::string head_name(Head h);

/// Seeded scaled-uniform fan-in initialization: weights U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)), biases zero. The scheme string is recorded in run
/// manifests.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);
std::string init_scheme_description();

/// Loss and gradient of the network on a batch, computed in one graph
/// evaluation. Rejects empty batches and mismatched dimensions.
LossGrad task_loss(const MlpSpec& spec, const ParamVector& theta, const LabeledBatch& batch);

/// Forward pass only: network outputs (regression values or logits).
Tensor mlp_forward(const MlpSpec& spec, const ParamVector& theta, const Tensor& x);

} // namespace metasharp
