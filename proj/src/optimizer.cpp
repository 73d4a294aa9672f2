#include "mds/optimizer.hpp"

#include <cmath>

#include "mds/errors.hpp"

namespace mds {

void adam_step(ParamSet& params, AdamState& state, double lr) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params.tensor(i).data.size(), 0.0);
            state.v[i].assign(params.tensor(i).data.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw UsageError("adam_step: state does not match parameter set");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params.tensor(i);
        if (!t.requires_grad) {
            continue;
        }
        if (t.grad.size() != t.data.size()) {
            throw UsageError("adam_step: missing grad for " + params.name(i));
        }
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < t.data.size(); ++j) {
            double g = t.grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            t.data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace mds
