#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace metasharp {

/// Flat parameter vector. Single source of truth for model parameters;
/// layer views are materialized by offset when a graph is built.
struct ParamVector {
    std::vector<double> v;

    ParamVector() = default;
    explicit ParamVector(std::size_t n) : v(n, 0.0) {}
    explicit ParamVector(std::vector<double> d) : v(std::move(d)) {}

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

/// Gradient with respect to a ParamVector; same length by construction.
struct GradVector {
    std::vector<double> v;

    GradVector() = default;
    explicit GradVector(std::size_t n) : v(n, 0.0) {}
    explicit GradVector(std::vector<double> d) : v(std::move(d)) {}

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

double l2_norm(const std::vector<double>& v);
double linf_norm(const std::vector<double>& v);
double dot(const std::vector<double>& a, const std::vector<double>& b);

inline double l2_norm(const GradVector& g) { return l2_norm(g.v); }
inline double linf_norm(const GradVector& g) { return linf_norm(g.v); }
inline double dot(const GradVector& a, const GradVector& b) { return dot(a.v, b.v); }

/// y_i += a * x_i
void axpy(double a, const std::vector<double>& x, std::vector<double>& y);

/// Coordinate clamp to [-c, c]; enforces a uniform bound on stochastic
/// gradients. c must be > 0. Idempotent.
GradVector clip_grad_inf(const GradVector& g, double c);

/// Deterministic seed splitting: derives an independent stream seed from a
/// master seed and an index (splitmix64 over the combined word).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

} // namespace metasharp
