#pragma once

#include <cstdint>
#include <vector>

#include "mds/params.hpp"

namespace mds {

// Adaptive-moment optimizer state; one (m, v) pair per parameter tensor,
// indexed in ParamSet order.
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One update over every tensor with requires_grad. Grads must be populated
// (usage error otherwise); grads are not cleared here.
void adam_step(ParamSet& params, AdamState& state, double lr);

}  // namespace mds
