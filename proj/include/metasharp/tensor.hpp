#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace metasharp {

/// Dense row-major tensor of 64-bit floats. Rank 0..2 is what the library
/// actually produces (scalars, vectors, batch matrices); the storage is
/// rank-agnostic.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
    static Tensor zeros(const std::vector<std::size_t>& s);

    std::size_t numel() const;
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    std::string shape_string() const;
};

bool same_shape(const Tensor& a, const Tensor& b);

} // namespace metasharp
