#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mds/tensor.hpp"

namespace mds {

class Graph;

// One op record. Nodes are created in topological order (inputs before
// consumers) and backward visits them in exact reverse creation order.
struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void()> back;
    bool needs_grad = false;
    Tensor* bound = nullptr;  // parameter tensor this leaf mirrors, if any
    const char* op = "";
};

using Var = std::shared_ptr<Node>;

// Dynamic tape over dense tensors. A graph is built per forward pass, owns
// every intermediate activation, and is discarded after the step. Exactly
// one thread may build/backward a given graph.
class Graph {
  public:
    // Constant input; never receives gradient.
    Var leaf(Tensor t);

    // Leaf bound to an external parameter; the value is snapshotted and
    // backward() accumulates into p.grad when p.requires_grad is set.
    // Binding the same tensor twice yields the same node.
    Var param(Tensor& p);

    // Elementwise (identical shapes).
    Var add(const Var& a, const Var& b);
    Var sub(const Var& a, const Var& b);
    Var mul(const Var& a, const Var& b);
    Var scale(const Var& a, double s);
    Var affine_elem(const Var& x, double a, double b);  // a*x + b
    Var relu(const Var& x);
    Var sigmoid(const Var& x);
    Var log_elem(const Var& x);  // requires strictly positive input
    Var clamp(const Var& x, double lo, double hi);

    // x:[N,C,H,W], w:[F,C,k,k], b:[F]; k odd, stride >= 1.
    Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
    // x:[N,C,H,W], w:[C,F,k,k], b:[F]; stride in {1,2}; adjoint of conv2d.
    Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad);
    // x:[N,In], w:[In,Out], b:[Out].
    Var linear(const Var& x, const Var& w, const Var& b);

    Var global_avg_pool(const Var& x);          // [N,C,H,W] -> [N,C]
    Var spatial_sum(const Var& x);              // [N,C,H,W] -> [N,C]
    Var channel_scale(const Var& x, const Var& s);  // x * s[N,C] broadcast over H,W
    Var concat_channels(const Var& a, const Var& b);
    Var sum_all(const Var& x);                  // -> [1]

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Repeated
    // calls accumulate into bound parameter grads; node-local grads reset
    // per call.
    void backward(const Var& loss);

    static const Tensor& value(const Var& v) { return v->value; }
    static double scalar(const Var& v);

    std::size_t node_count() const { return order_.size(); }

  private:
    Var make(Tensor value, std::vector<Var> inputs, const char* op);
    static void check_same_shape(const Var& a, const Var& b, const char* op);

    std::vector<Var> order_;
    std::unordered_map<const Tensor*, Var> bound_;
};

}  // namespace mds
