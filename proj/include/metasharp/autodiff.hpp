#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "metasharp/params.hpp"
#include "metasharp/tensor.hpp"

namespace metasharp {

using NodeId = std::size_t;

/// Define-by-run reverse-mode computation graph over Tensors.
///
/// Node values are computed eagerly as ops are recorded; backward() runs one
/// reverse sweep and accumulates parameter adjoints into a GradVector. The op
/// set is fixed: affine, relu, tanh, softmax cross-entropy, mean squared
/// error, elementwise add, scalar scale, reduce-mean.
///
/// A graph instance is single-use and single-threaded: build, read values,
/// call backward() once. Distinct graphs may run concurrently over a shared
/// read-only ParamVector.
class CompGraph {
  public:
    CompGraph() = default;
    CompGraph(const CompGraph&) = delete;
    CompGraph& operator=(const CompGraph&) = delete;

    /// Constant leaf (data, targets). No gradient is reported for inputs.
    NodeId input(Tensor value);

    /// Parameter leaf viewing theta[offset, offset + rows*cols) as a matrix.
    NodeId param_matrix(const ParamVector& theta, std::size_t offset,
                        std::size_t rows, std::size_t cols);
    /// Parameter leaf viewing theta[offset, offset + len) as a vector.
    NodeId param_vector(const ParamVector& theta, std::size_t offset, std::size_t len);

    /// x[n,i] * w[i,o] + b[o], bias broadcast over rows.
    NodeId affine(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId tanh_op(NodeId x);
    /// Elementwise sum; shapes must match exactly (no broadcasting).
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    /// Mean over all elements; result is a scalar.
    NodeId reduce_mean(NodeId x);
    /// Mean over all elements of (pred - target)^2; result is a scalar.
    NodeId mse(NodeId pred, NodeId target);
    /// Mean over rows of -log softmax(logits)[label]; labels in [0, cols).
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

    const Tensor& value(NodeId id) const;
    /// Value of a scalar node.
    double scalar_value(NodeId id) const;

    /// Reverse sweep from a scalar root seeded with 1.0.
    GradVector backward(NodeId root, std::size_t param_dim);
    /// Reverse sweep with an explicit seed cotangent (shape must match root).
    GradVector backward(NodeId root, const Tensor& seed, std::size_t param_dim);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op {
        input,
        param,
        affine,
        relu,
        tanh_fn,
        add,
        scale,
        reduce_mean,
        mse,
        softmax_xent,
    };

    struct Node {
        Op op;
        NodeId a = 0, b = 0, c = 0;
        Tensor value;
        std::vector<double> adjoint;
        double factor = 0.0;             // scale
        std::size_t param_offset = 0;    // param
        std::vector<int> labels;         // softmax_xent
        std::vector<double> softmax;     // softmax_xent row-major cache
    };

    NodeId push(Node n);
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
    bool swept_ = false;
};

/// Central-difference gradient of a scalar function of the parameters.
/// Oracle-grade reference: independent of CompGraph. Throws if any probe
/// evaluates non-finite, naming the offending coordinate.
GradVector finite_difference_gradient(const std::function<double(const ParamVector&)>& fn,
                                      const ParamVector& theta, double h);

} // namespace metasharp
