#pragma once

#include <cstdint>
#include <vector>

#include "mds/errors.hpp"

namespace mds {

// Dense row-major tensor of 64-bit reals with an optional gradient buffer.
// Value semantics; shape extents are strictly positive and
// product(shape) == data.size() always holds.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty, or same length as data
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape_, double fill = 0.0);

    static Tensor from(std::vector<int> shape_, std::vector<double> values);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    void ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), 0.0);
        }
    }
    void zero_grad() {
        if (!grad.empty()) {
            grad.assign(grad.size(), 0.0);
        }
    }

    bool all_finite() const;

    // NCHW indexing; tensor must be 4-d.
    double& at4(int n, int c, int h, int w) {
        return data[flat4(n, c, h, w)];
    }
    double at4(int n, int c, int h, int w) const {
        return data[flat4(n, c, h, w)];
    }
    std::size_t flat4(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    double& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at2(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
};

std::int64_t numel_of(const std::vector<int>& shape);

// Sum of all entries; the count of a density map, the mass of a kernel.
double sum_of(const Tensor& t);

double max_of(const Tensor& t);

}  // namespace mds
