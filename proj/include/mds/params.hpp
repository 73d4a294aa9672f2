#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mds/rng.hpp"
#include "mds/tensor.hpp"

namespace mds {

// Named parameter tensors with deterministic iteration order (insertion
// order). Entries are heap-pinned so Tensor* stays valid across inserts.
class ParamSet {
  public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i]->name; }
    Tensor& tensor(std::size_t i) { return entries_[i]->tensor; }
    const Tensor& tensor(std::size_t i) const { return entries_[i]->tensor; }

    void zero_grads();
    void set_requires_grad(bool value);
    std::int64_t total_elements() const;

    void save(const std::string& path) const;
    // Loads a checkpoint into a fresh set, preserving file order.
    static ParamSet load(const std::string& path);
    // Copies values from another set; shapes and names must match exactly.
    void load_values_from(const ParamSet& other);

  private:
    struct Entry {
        std::string name;
        Tensor tensor;
    };
    std::vector<std::unique_ptr<Entry>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Centered uniform init with half-width sqrt(6/fan_in), which keeps the
// activation scale roughly constant through ReLU stacks; biases stay zero.
// fan_in follows the layer type (conv: C*k*k).
Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace mds
