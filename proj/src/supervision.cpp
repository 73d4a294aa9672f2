#include "mds/supervision.hpp"

#include <cmath>

#include "mds/errors.hpp"

namespace mds {

const char* beta_mode_name(BetaMode m) {
    switch (m) {
        case BetaMode::increase:
            return "increase";
        case BetaMode::equal:
            return "equal";
        default:
            return "decrease";
    }
}

BetaMode beta_mode_from_name(const std::string& name) {
    if (name == "increase") {
        return BetaMode::increase;
    }
    if (name == "equal") {
        return BetaMode::equal;
    }
    if (name == "decrease") {
        return BetaMode::decrease;
    }
    throw ConfigError("unknown beta mode: " + name);
}

void LossConfig::validate() const {
    if (alpha <= 0.0) {
        throw ConfigError("alpha must be positive");
    }
    if (num_nodes < 1) {
        throw ConfigError("num_nodes must be >= 1");
    }
    if (ce_clamp <= 0.0 || ce_clamp >= 0.5) {
        throw ConfigError("ce_clamp must lie in (0, 0.5)");
    }
}

NodeWeights beta_schedule(BetaMode mode, int num_nodes) {
    if (num_nodes < 1) {
        throw ConfigError("beta_schedule: num_nodes must be >= 1");
    }
    NodeWeights w;
    w.beta.resize(static_cast<std::size_t>(num_nodes));
    for (int n = 1; n <= num_nodes; ++n) {
        double v = 1.0;
        if (mode == BetaMode::increase) {
            v = std::ldexp(1.0, -(num_nodes - n));
        } else if (mode == BetaMode::decrease) {
            v = std::ldexp(1.0, -(n - 1));
        }
        w.beta[static_cast<std::size_t>(n - 1)] = v;
    }
    return w;
}

static int batch_of(const Tensor& t) {
    return t.ndim() >= 3 ? t.dim(0) : 1;
}

Var loss_groundtruth(Graph& g, const Var& output, const Var& gt) {
    if (Graph::value(output).shape != Graph::value(gt).shape) {
        throw UsageError("loss_groundtruth: output and groundtruth shapes differ");
    }
    int n = batch_of(Graph::value(output));
    Var d = g.sub(output, gt);
    return g.scale(g.sum_all(g.mul(d, d)), 1.0 / n);
}

double loss_groundtruth(const Tensor& output, const Tensor& gt) {
    Graph g;
    return Graph::scalar(loss_groundtruth(g, g.leaf(output), g.leaf(gt)));
}

static Tensor lift_to_4d(const Tensor& t) {
    if (t.ndim() == 4) {
        return t;
    }
    if (t.ndim() == 3) {
        return Tensor::from({1, t.dim(0), t.dim(1), t.dim(2)}, t.data);
    }
    throw UsageError("feature tensors must be [C,H,W] or [N,C,H,W]");
}

static Tensor lift_to_2d(const Tensor& t) {
    if (t.ndim() == 2) {
        return t;
    }
    if (t.ndim() == 1) {
        return Tensor::from({1, t.dim(0)}, t.data);
    }
    throw UsageError("weight tensors must be [C] or [N,C]");
}

static void check_node_shapes(const Tensor& tap, const Tensor& feat, int node) {
    if (tap.shape != feat.shape) {
        throw UsageError("loss_features: node " + std::to_string(node) + " shape mismatch (" +
                         std::to_string(tap.dim(1)) + " vs " + std::to_string(feat.dim(1)) +
                         " channels)");
    }
}

Var loss_features(Graph& g, const std::vector<Var>& taps, const std::vector<Var>& features,
                  const std::vector<Var>& weights, const NodeWeights& betas) {
    if (taps.size() != features.size() || taps.size() != weights.size() ||
        taps.size() != betas.beta.size()) {
        throw UsageError("loss_features: node counts differ");
    }
    Var total;
    int batch = 1;
    for (std::size_t n = 0; n < taps.size(); ++n) {
        const Tensor& tv = Graph::value(taps[n]);
        check_node_shapes(tv, Graph::value(features[n]), static_cast<int>(n) + 1);
        batch = tv.dim(0);
        Var d = g.sub(taps[n], features[n]);
        Var per_channel = g.spatial_sum(g.mul(d, d));
        Var weighted = g.mul(per_channel, weights[n]);
        Var node_loss = g.scale(g.sum_all(weighted), betas.beta[n]);
        total = total ? g.add(total, node_loss) : node_loss;
    }
    if (!total) {
        throw UsageError("loss_features: at least one node required");
    }
    return g.scale(total, 1.0 / batch);
}

double loss_features(const std::vector<Tensor>& taps, const SupervisionBundle& bundle,
                     const NodeWeights& betas) {
    Graph g;
    std::vector<Var> tap_vars, feat_vars, weight_vars;
    for (std::size_t n = 0; n < taps.size(); ++n) {
        tap_vars.push_back(g.leaf(lift_to_4d(taps[n])));
        if (n < bundle.features.size()) {
            feat_vars.push_back(g.leaf(lift_to_4d(bundle.features[n])));
            weight_vars.push_back(g.leaf(lift_to_2d(bundle.weights[n])));
        }
    }
    if (feat_vars.size() != tap_vars.size()) {
        throw UsageError("loss_features: bundle node count differs from taps");
    }
    return Graph::scalar(loss_features(g, tap_vars, feat_vars, weight_vars, betas));
}

Var loss_features_ew(Graph& g, const std::vector<Var>& taps, const std::vector<Var>& features,
                     const NodeWeights& betas) {
    if (taps.size() != features.size() || taps.size() != betas.beta.size()) {
        throw UsageError("loss_features_ew: node counts differ");
    }
    Var total;
    int batch = 1;
    for (std::size_t n = 0; n < taps.size(); ++n) {
        const Tensor& tv = Graph::value(taps[n]);
        check_node_shapes(tv, Graph::value(features[n]), static_cast<int>(n) + 1);
        batch = tv.dim(0);
        int channels = tv.dim(1);
        Var d = g.sub(taps[n], features[n]);
        Var per_channel = g.spatial_sum(g.mul(d, d));
        Var node_loss = g.scale(g.sum_all(per_channel), betas.beta[n] / channels);
        total = total ? g.add(total, node_loss) : node_loss;
    }
    if (!total) {
        throw UsageError("loss_features_ew: at least one node required");
    }
    return g.scale(total, 1.0 / batch);
}

double loss_features_ew(const std::vector<Tensor>& taps, const std::vector<Tensor>& features,
                        const NodeWeights& betas) {
    Graph g;
    std::vector<Var> tap_vars, feat_vars;
    for (std::size_t n = 0; n < taps.size(); ++n) {
        tap_vars.push_back(g.leaf(lift_to_4d(taps[n])));
        if (n < features.size()) {
            feat_vars.push_back(g.leaf(lift_to_4d(features[n])));
        }
    }
    if (feat_vars.size() != tap_vars.size()) {
        throw UsageError("loss_features_ew: feature node count differs from taps");
    }
    return Graph::scalar(loss_features_ew(g, tap_vars, feat_vars, betas));
}

Var combined_loss(Graph& g, const Var& l_g, const Var& l_f, double alpha) {
    if (alpha <= 0.0) {
        throw ConfigError("combined_loss: alpha must be positive");
    }
    return g.add(l_g, g.scale(l_f, alpha));
}

double combined_loss(double l_g, double l_f, double alpha) {
    if (alpha <= 0.0) {
        throw ConfigError("combined_loss: alpha must be positive");
    }
    return l_g + alpha * l_f;
}

Var loss_dot(Graph& g, const Var& prob, const Var& dots, double clamp) {
    if (Graph::value(prob).shape != Graph::value(dots).shape) {
        throw UsageError("loss_dot: probability and dot map shapes differ");
    }
    if (clamp <= 0.0 || clamp >= 0.5) {
        throw UsageError("loss_dot: clamp must lie in (0, 0.5)");
    }
    int n = batch_of(Graph::value(prob));
    Var p = g.clamp(prob, clamp, 1.0 - clamp);
    Var log_p = g.log_elem(p);
    Var log_1mp = g.log_elem(g.affine_elem(p, -1.0, 1.0));
    Var one_minus_y = g.affine_elem(dots, -1.0, 1.0);
    Var ce = g.add(g.mul(dots, log_p), g.mul(one_minus_y, log_1mp));
    return g.scale(g.sum_all(ce), -1.0 / n);
}

double loss_dot(const Tensor& prob, const Tensor& dots, double clamp) {
    Graph g;
    return Graph::scalar(loss_dot(g, g.leaf(prob), g.leaf(dots), clamp));
}

}  // namespace mds
