#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mxflow {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(std::span<const std::int64_t> shape);
std::string shape_to_string(std::span<const std::int64_t> shape);

// Dense row-major array of 64-bit reals.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);
    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double value);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // 2-D accessors for the common (rows, cols) case.
    double& at(std::int64_t r, std::int64_t c) { return data[r * shape.back() + c]; }
    double at(std::int64_t r, std::int64_t c) const { return data[r * shape.back() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace mxflow
