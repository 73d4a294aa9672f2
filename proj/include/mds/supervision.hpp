#pragma once

#include <vector>

#include "mds/graph.hpp"
#include "mds/models.hpp"

namespace mds {

enum class BetaMode { increase, equal, decrease };

const char* beta_mode_name(BetaMode m);
BetaMode beta_mode_from_name(const std::string& name);

struct LossConfig {
    double alpha = 0.05;
    BetaMode mode = BetaMode::increase;
    int num_nodes = 3;             // M
    HeadMode regime = HeadMode::density;
    double ce_clamp = 1e-7;

    void validate() const;
};

// Per-node loss weights. increase: beta_n = 1/2^(M-n); decrease mirrors it;
// equal: all ones.
struct NodeWeights {
    std::vector<double> beta;
};

NodeWeights beta_schedule(BetaMode mode, int num_nodes);

// Batch convention for every loss: tensors of rank >= 3 treat dim 0 as the
// batch; rank <= 2 is a single sample. Pixel residuals are summed per image
// and averaged over the batch.

// mean_i ||O_i - G_i||^2 (squared error summed over pixels)
Var loss_groundtruth(Graph& g, const Var& output, const Var& gt);
double loss_groundtruth(const Tensor& output, const Tensor& gt);

// mean_i sum_n beta_n sum_c W_c^n ||O_c^n - G_c^n||^2
Var loss_features(Graph& g, const std::vector<Var>& taps, const std::vector<Var>& features,
                  const std::vector<Var>& weights, const NodeWeights& betas);
double loss_features(const std::vector<Tensor>& taps, const SupervisionBundle& bundle,
                     const NodeWeights& betas);

// Equal-weight ablation: the adaptive W_c^n is replaced by the fixed 1/C_n.
Var loss_features_ew(Graph& g, const std::vector<Var>& taps, const std::vector<Var>& features,
                     const NodeWeights& betas);
double loss_features_ew(const std::vector<Tensor>& taps, const std::vector<Tensor>& features,
                        const NodeWeights& betas);

// L = L_G + alpha * L_F
Var combined_loss(Graph& g, const Var& l_g, const Var& l_f, double alpha);
double combined_loss(double l_g, double l_f, double alpha);

// Binary cross-entropy against a dot map, probabilities clamped to
// [clamp, 1-clamp]; summed per image, averaged over the batch.
Var loss_dot(Graph& g, const Var& prob, const Var& dots, double clamp);
double loss_dot(const Tensor& prob, const Tensor& dots, double clamp);

}  // namespace mds
