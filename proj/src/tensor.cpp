#include "mds/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace mds {

std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) {
            throw UsageError("tensor extents must be positive");
        }
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
}

Tensor Tensor::from(std::vector<int> shape_, std::vector<double> values) {
    if (numel_of(shape_) != static_cast<std::int64_t>(values.size())) {
        throw UsageError("tensor shape does not match value count");
    }
    Tensor t;
    t.shape = std::move(shape_);
    t.data = std::move(values);
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double sum_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) {
        s += v;
    }
    return s;
}

double max_of(const Tensor& t) {
    double m = t.data.empty() ? 0.0 : t.data[0];
    for (double v : t.data) {
        m = std::max(m, v);
    }
    return m;
}

}  // namespace mds
