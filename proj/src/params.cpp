#include "mds/params.hpp"

#include <cmath>

#include "mds/errors.hpp"
#include "mds/nt1.hpp"

namespace mds {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
    if (index_.count(name) != 0) {
        throw UsageError("duplicate parameter name: " + name);
    }
    auto e = std::make_unique<Entry>();
    e->name = name;
    e->tensor = std::move(t);
    entries_.push_back(std::move(e));
    index_.emplace(name, entries_.size() - 1);
    return entries_.back()->tensor;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter: " + name);
    }
    return entries_[it->second]->tensor;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter: " + name);
    }
    return entries_[it->second]->tensor;
}

void ParamSet::zero_grads() {
    for (auto& e : entries_) {
        e->tensor.zero_grad();
    }
}

void ParamSet::set_requires_grad(bool value) {
    for (auto& e : entries_) {
        e->tensor.requires_grad = value;
        if (!value) {
            e->tensor.grad.clear();
        }
    }
}

std::int64_t ParamSet::total_elements() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) {
        n += e->tensor.numel();
    }
    return n;
}

void ParamSet::save(const std::string& path) const {
    std::vector<std::pair<std::string, const Tensor*>> entries;
    entries.reserve(entries_.size());
    for (const auto& e : entries_) {
        entries.emplace_back(e->name, &e->tensor);
    }
    save_checkpoint(path, entries);
}

ParamSet ParamSet::load(const std::string& path) {
    ParamSet ps;
    for (auto& [name, tensor] : load_checkpoint(path)) {
        ps.add(name, std::move(tensor));
    }
    return ps;
}

void ParamSet::load_values_from(const ParamSet& other) {
    if (other.size() != size()) {
        throw ConfigError("parameter set size mismatch");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        if (other.name(i) != name(i) || other.tensor(i).shape != tensor(i).shape) {
            throw ConfigError("parameter mismatch at " + name(i));
        }
        tensor(i).data = other.tensor(i).data;
    }
}

Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data) {
        v = rng.uniform(-a, a);
    }
    t.requires_grad = true;
    return t;
}

}  // namespace mds
