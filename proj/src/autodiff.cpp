#include "metasharp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace metasharp {

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    if (n != data.size())
        throw std::invalid_argument("Tensor: shape " + shape_string() + " does not match " +
                                    std::to_string(data.size()) + " elements");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::zeros(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return Tensor(s, std::vector<double>(n, 0.0));
}

std::size_t Tensor::numel() const { return data.size(); }

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::logic_error("Tensor::rows: rank " + std::to_string(rank()));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("Tensor::cols: rank " + std::to_string(rank()));
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// ---------------------------------------------------------------------------
// Params

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double linf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("axpy: length mismatch " + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()));
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

GradVector clip_grad_inf(const GradVector& g, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("clip_grad_inf: bound must be > 0, got " + std::to_string(c));
    GradVector out = g;
    for (double& x : out.v) x = std::clamp(x, -c, c);
    return out;
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
    // splitmix64 finalizer over the combined word
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// CompGraph

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw std::invalid_argument(std::string(op) + ": " + detail);
}

} // namespace

NodeId CompGraph::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

const CompGraph::Node& CompGraph::node(NodeId id) const {
    if (id >= nodes_.size())
        throw std::out_of_range("CompGraph: node id " + std::to_string(id) + " out of range");
    return nodes_[id];
}

NodeId CompGraph::input(Tensor value) {
    Node n;
    n.op = Op::input;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId CompGraph::param_matrix(const ParamVector& theta, std::size_t offset,
                               std::size_t rows, std::size_t cols) {
    if (offset + rows * cols > theta.size())
        shape_error("param_matrix", "view [" + std::to_string(offset) + ", " +
                                        std::to_string(offset + rows * cols) + ") exceeds parameter length " +
                                        std::to_string(theta.size()));
    Node n;
    n.op = Op::param;
    n.param_offset = offset;
    n.value = Tensor({rows, cols},
                     std::vector<double>(theta.v.begin() + offset, theta.v.begin() + offset + rows * cols));
    return push(std::move(n));
}

NodeId CompGraph::param_vector(const ParamVector& theta, std::size_t offset, std::size_t len) {
    if (offset + len > theta.size())
        shape_error("param_vector", "view [" + std::to_string(offset) + ", " +
                                        std::to_string(offset + len) + ") exceeds parameter length " +
                                        std::to_string(theta.size()));
    Node n;
    n.op = Op::param;
    n.param_offset = offset;
    n.value = Tensor({len}, std::vector<double>(theta.v.begin() + offset, theta.v.begin() + offset + len));
    return push(std::move(n));
}

NodeId CompGraph::affine(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    const Tensor& bv = node(b).value;
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
        shape_error("affine", "expected x[n,i], w[i,o], b[o]; got x" + xv.shape_string() + " w" +
                                  wv.shape_string() + " b" + bv.shape_string());
    if (xv.cols() != wv.rows())
        shape_error("affine", "x cols " + std::to_string(xv.cols()) + " != w rows " + std::to_string(wv.rows()));
    if (bv.shape[0] != wv.cols())
        shape_error("affine", "bias length " + std::to_string(bv.shape[0]) + " != w cols " + std::to_string(wv.cols()));

    const std::size_t n = xv.rows(), in = xv.cols(), out = wv.cols();
    Tensor y = Tensor::zeros({n, out});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
            double acc = bv.data[o];
            for (std::size_t i = 0; i < in; ++i) acc += xv.data[r * in + i] * wv.data[i * out + o];
            y.data[r * out + o] = acc;
        }
    }
    Node nd;
    nd.op = Op::affine;
    nd.a = x;
    nd.b = w;
    nd.c = b;
    nd.value = std::move(y);
    return push(std::move(nd));
}

NodeId CompGraph::relu(NodeId x) {
    Node nd;
    nd.op = Op::relu;
    nd.a = x;
    nd.value = node(x).value;
    for (double& v : nd.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(nd));
}

NodeId CompGraph::tanh_op(NodeId x) {
    Node nd;
    nd.op = Op::tanh_fn;
    nd.a = x;
    nd.value = node(x).value;
    for (double& v : nd.value.data) v = std::tanh(v);
    return push(std::move(nd));
}

NodeId CompGraph::add(NodeId a, NodeId b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (!same_shape(av, bv))
        shape_error("add", "shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
    Node nd;
    nd.op = Op::add;
    nd.a = a;
    nd.b = b;
    nd.value = av;
    for (std::size_t i = 0; i < bv.numel(); ++i) nd.value.data[i] += bv.data[i];
    return push(std::move(nd));
}

NodeId CompGraph::scale(NodeId x, double c) {
    Node nd;
    nd.op = Op::scale;
    nd.a = x;
    nd.factor = c;
    nd.value = node(x).value;
    for (double& v : nd.value.data) v *= c;
    return push(std::move(nd));
}

NodeId CompGraph::reduce_mean(NodeId x) {
    const Tensor& xv = node(x).value;
    if (xv.numel() == 0) shape_error("reduce_mean", "empty operand");
    double s = 0.0;
    for (double v : xv.data) s += v;
    Node nd;
    nd.op = Op::reduce_mean;
    nd.a = x;
    nd.value = Tensor::scalar(s / static_cast<double>(xv.numel()));
    return push(std::move(nd));
}

NodeId CompGraph::mse(NodeId pred, NodeId target) {
    const Tensor& pv = node(pred).value;
    const Tensor& tv = node(target).value;
    if (!same_shape(pv, tv))
        shape_error("mse", "shape mismatch " + pv.shape_string() + " vs " + tv.shape_string());
    if (pv.numel() == 0) shape_error("mse", "empty operand");
    double s = 0.0;
    for (std::size_t i = 0; i < pv.numel(); ++i) {
        const double d = pv.data[i] - tv.data[i];
        s += d * d;
    }
    Node nd;
    nd.op = Op::mse;
    nd.a = pred;
    nd.b = target;
    nd.value = Tensor::scalar(s / static_cast<double>(pv.numel()));
    return push(std::move(nd));
}

NodeId CompGraph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Tensor& lv = node(logits).value;
    if (lv.rank() != 2)
        shape_error("softmax_cross_entropy", "expected logits[n,k], got " + lv.shape_string());
    const std::size_t n = lv.rows(), k = lv.cols();
    if (labels.size() != n)
        shape_error("softmax_cross_entropy",
                    "label count " + std::to_string(labels.size()) + " != batch rows " + std::to_string(n));
    for (std::size_t r = 0; r < n; ++r)
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
            shape_error("softmax_cross_entropy", "label " + std::to_string(labels[r]) + " at row " +
                                                     std::to_string(r) + " outside [0, " + std::to_string(k) + ")");

    Node nd;
    nd.op = Op::softmax_xent;
    nd.a = logits;
    nd.labels = std::move(labels);
    nd.softmax.assign(n * k, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double mx = lv.data[r * k];
        for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, lv.data[r * k + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(lv.data[r * k + c] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < k; ++c) nd.softmax[r * k + c] = std::exp(lv.data[r * k + c] - lse);
        total += lse - lv.data[r * k + static_cast<std::size_t>(nd.labels[r])];
    }
    nd.value = Tensor::scalar(total / static_cast<double>(n));
    return push(std::move(nd));
}

const Tensor& CompGraph::value(NodeId id) const { return node(id).value; }

double CompGraph::scalar_value(NodeId id) const {
    const Tensor& v = node(id).value;
    if (v.numel() != 1)
        throw std::invalid_argument("scalar_value: node has " + std::to_string(v.numel()) + " elements");
    return v.data[0];
}

GradVector CompGraph::backward(NodeId root, std::size_t param_dim) {
    const Tensor& rv = node(root).value;
    if (rv.numel() != 1)
        throw std::invalid_argument("backward: root is not scalar (shape " + rv.shape_string() +
                                    "); pass an explicit seed cotangent");
    Tensor seed = rv;
    seed.data[0] = 1.0;
    return backward(root, seed, param_dim);
}

GradVector CompGraph::backward(NodeId root, const Tensor& seed, std::size_t param_dim) {
    if (swept_) throw std::logic_error("backward: graph already swept (graphs are single-use)");
    swept_ = true;
    const Node& rn = node(root);
    if (!same_shape(rn.value, seed))
        throw std::invalid_argument("backward: seed shape " + seed.shape_string() +
                                    " does not match root shape " + rn.value.shape_string());

    for (Node& n : nodes_) n.adjoint.assign(n.value.numel(), 0.0);
    nodes_[root].adjoint = seed.data;

    GradVector grad(param_dim);
    for (std::size_t idx = root + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        const std::vector<double>& g = n.adjoint;
        bool any = false;
        for (double v : g)
            if (v != 0.0) { any = true; break; }
        if (!any && n.op != Op::param) continue;

        switch (n.op) {
        case Op::input:
            break;
        case Op::param: {
            if (n.param_offset + g.size() > grad.size())
                throw std::logic_error("backward: parameter view exceeds gradient length");
            for (std::size_t i = 0; i < g.size(); ++i) grad[n.param_offset + i] += g[i];
            break;
        }
        case Op::affine: {
            const Tensor& xv = nodes_[n.a].value;
            const Tensor& wv = nodes_[n.b].value;
            const std::size_t rows = xv.rows(), in = xv.cols(), out = wv.cols();
            std::vector<double>& dx = nodes_[n.a].adjoint;
            std::vector<double>& dw = nodes_[n.b].adjoint;
            std::vector<double>& db = nodes_[n.c].adjoint;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t o = 0; o < out; ++o) {
                    const double gy = g[r * out + o];
                    if (gy == 0.0) continue;
                    db[o] += gy;
                    for (std::size_t i = 0; i < in; ++i) {
                        dx[r * in + i] += gy * wv.data[i * out + o];
                        dw[i * out + o] += gy * xv.data[r * in + i];
                    }
                }
            }
            break;
        }
        case Op::relu: {
            const Tensor& xv = nodes_[n.a].value;
            std::vector<double>& dx = nodes_[n.a].adjoint;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xv.data[i] > 0.0) dx[i] += g[i];
            break;
        }
        case Op::tanh_fn: {
            std::vector<double>& dx = nodes_[n.a].adjoint;
            for (std::size_t i = 0; i < g.size(); ++i)
                dx[i] += g[i] * (1.0 - n.value.data[i] * n.value.data[i]);
            break;
        }
        case Op::add: {
            std::vector<double>& da = nodes_[n.a].adjoint;
            std::vector<double>& db2 = nodes_[n.b].adjoint;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db2[i] += g[i];
            }
            break;
        }
        case Op::scale: {
            std::vector<double>& dx = nodes_[n.a].adjoint;
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * n.factor;
            break;
        }
        case Op::reduce_mean: {
            std::vector<double>& dx = nodes_[n.a].adjoint;
            const double s = g[0] / static_cast<double>(dx.size());
            for (double& v : dx) v += s;
            break;
        }
        case Op::mse: {
            const Tensor& pv = nodes_[n.a].value;
            const Tensor& tv = nodes_[n.b].value;
            std::vector<double>& dp = nodes_[n.a].adjoint;
            std::vector<double>& dt = nodes_[n.b].adjoint;
            const double s = 2.0 * g[0] / static_cast<double>(pv.numel());
            for (std::size_t i = 0; i < pv.numel(); ++i) {
                const double d = s * (pv.data[i] - tv.data[i]);
                dp[i] += d;
                dt[i] -= d;
            }
            break;
        }
        case Op::softmax_xent: {
            const std::size_t rows = nodes_[n.a].value.rows();
            const std::size_t k = nodes_[n.a].value.cols();
            std::vector<double>& dl = nodes_[n.a].adjoint;
            const double s = g[0] / static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < k; ++c) {
                    double p = n.softmax[r * k + c];
                    if (c == static_cast<std::size_t>(n.labels[r])) p -= 1.0;
                    dl[r * k + c] += s * p;
                }
            break;
        }
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Finite differences

GradVector finite_difference_gradient(const std::function<double(const ParamVector&)>& fn,
                                      const ParamVector& theta, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    GradVector grad(theta.size());
    ParamVector probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + h;
        const double up = fn(probe);
        probe[i] = theta[i] - h;
        const double down = fn(probe);
        probe[i] = theta[i];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("finite_difference_gradient: non-finite loss probing coordinate " +
                                     std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

} // namespace metasharp
