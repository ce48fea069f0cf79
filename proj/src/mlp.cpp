#include "metasharp/mlp.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace metasharp {

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("MlpSpec: need at least input and output layer sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw std::invalid_argument("MlpSpec: zero layer size");
    if (head == Head::classification && layer_sizes.back() < 2)
        throw std::invalid_argument("MlpSpec: classification head needs >= 2 classes");
}

std::size_t MlpSpec::param_count() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        d += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return d;
}

std::string MlpSpec::canonical_string() const {
    std::ostringstream os;
    os << "mlp:";
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) os << (i ? "," : "") << layer_sizes[i];
    os << ";act=" << activation_name(activation) << ";head=" << head_name(head);
    return os.str();
}

std::uint64_t MlpSpec::spec_hash() const {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : canonical_string()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

std::string head_name(Head h) {
    return h == Head::regression ? "regression" : "classification";
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector theta(spec.param_count());
    std::mt19937_64 rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < in * out; ++i) theta[off + i] = u(rng);
        off += in * out;
        // biases stay zero
        off += out;
    }
    return theta;
}

std::string init_scheme_description() {
    return "weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer from mt19937_64(seed), biases zero";
}

namespace {

struct BuiltNet {
    NodeId out;
};

BuiltNet build_net(CompGraph& g, const MlpSpec& spec, const ParamVector& theta, const Tensor& x) {
    if (x.rank() != 2)
        throw std::invalid_argument("mlp: batch must be rank-2 [n, input_dim], got " + x.shape_string());
    if (x.rows() == 0) throw std::invalid_argument("mlp: empty batch");
    if (x.cols() != spec.input_dim())
        throw std::invalid_argument("mlp: batch feature dim " + std::to_string(x.cols()) +
                                    " != spec input dim " + std::to_string(spec.input_dim()));
    if (theta.size() != spec.param_count())
        throw std::invalid_argument("mlp: parameter length " + std::to_string(theta.size()) +
                                    " != spec param count " + std::to_string(spec.param_count()));

    NodeId h = g.input(x);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
        NodeId w = g.param_matrix(theta, off, in, out);
        off += in * out;
        NodeId b = g.param_vector(theta, off, out);
        off += out;
        h = g.affine(h, w, b);
        const bool last = (l + 2 == spec.layer_sizes.size());
        if (!last) h = spec.activation == Activation::relu ? g.relu(h) : g.tanh_op(h);
    }
    return {h};
}

} // namespace

LossGrad task_loss(const MlpSpec& spec, const ParamVector& theta, const LabeledBatch& batch) {
    spec.validate();
    CompGraph g;
    BuiltNet net = build_net(g, spec, theta, batch.x);
    NodeId loss;
    if (spec.head == Head::regression) {
        if (!same_shape(batch.y, g.value(net.out)))
            throw std::invalid_argument("task_loss: target shape " + batch.y.shape_string() +
                                        " != prediction shape " + g.value(net.out).shape_string());
        NodeId t = g.input(batch.y);
        loss = g.mse(net.out, t);
    } else {
        if (batch.labels.size() != batch.x.rows())
            throw std::invalid_argument("task_loss: " + std::to_string(batch.labels.size()) +
                                        " labels for batch of " + std::to_string(batch.x.rows()));
        loss = g.softmax_cross_entropy(net.out, batch.labels);
    }
    LossGrad out;
    out.loss = g.scalar_value(loss);
    out.grad = g.backward(loss, theta.size());
    return out;
}

Tensor mlp_forward(const MlpSpec& spec, const ParamVector& theta, const Tensor& x) {
    spec.validate();
    CompGraph g;
    BuiltNet net = build_net(g, spec, theta, x);
    return g.value(net.out);
}

} // namespace metasharp
