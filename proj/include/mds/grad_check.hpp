#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mds/graph.hpp"
#include "mds/params.hpp"

namespace mds {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::int64_t coords_checked = 0;
    std::int64_t coords_skipped = 0;  // kink-contaminated finite differences
    std::string worst_param;
    std::int64_t worst_index = -1;
    std::string message;
};

// Builds the scalar loss over `params` bound through Graph::param.
using LossBuilder = std::function<Var(Graph&)>;

// Central-difference check of analytic gradients; eps must lie in
// [1e-7, 1e-3]. Per tensor, up to `coords_per_tensor` coordinates are
// sampled (all of them when the tensor is small). Relative error uses a
// unit floor:
//   rel = |a - n| / max(1, |a| + |n|).
//
// ReLU makes the loss piecewise smooth: when a perturbed coordinate drags a
// pre-activation across a kink inside the secant bracket, the central
// difference is off by up to |f+ + f- - 2 f0| / (2 eps) while the analytic
// one-sided derivative stays exact. A coordinate is therefore skipped (and
// another sampled in its place) only when its disagreement is within twice
// that bracket bound; disagreements larger than the bound — a wrong backward
// rule — still fail. A non-finite loss fails with a diagnostic.
GradCheckReport grad_check(const LossBuilder& build, ParamSet& params,
                           double eps, double tol, std::uint64_t seed,
                           int coords_per_tensor = 64);

}  // namespace mds
