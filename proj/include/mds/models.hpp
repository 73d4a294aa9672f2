#pragma once

#include <string>
#include <vector>

#include "mds/graph.hpp"
#include "mds/params.hpp"

namespace mds {

enum class HeadMode { density, dot };

const char* head_mode_name(HeadMode m);
HeadMode head_mode_from_name(const std::string& name);

// Shared shape plan for both networks. The decoder has num_nodes upsampling
// stages; stage n emits base_channels * 2^(num_nodes - n) channels, so the
// default (base 8, M 3) yields taps of 32/16/8 channels at 1/4, 1/2 and full
// resolution.
struct ArchConfig {
    int in_channels = 1;
    int base_channels = 8;
    int num_nodes = 3;  // M; equals the number of decoder upsampling stages
    HeadMode head_mode = HeadMode::density;
    int encoder_depth = 3;  // downsampling stages
    int se_reduction = 4;

    void validate() const;
    int bottleneck_channels() const { return base_channels * (1 << encoder_depth); }
    int tap_channels(int node) const;  // node in 1..num_nodes
    void check_input_size(int h, int w) const;
};

// Per-node decoder features G^n and channel weights W^n from the frozen SN,
// as plain tensors (batched: [N,C,H,W] and [N,C]).
struct SupervisionBundle {
    std::vector<Tensor> features;
    std::vector<Tensor> weights;
};

struct SeOut {
    Var scaled;
    Var weights;  // in (0,1), shape [N,C]
};

// weights = sigmoid(fc2(relu(fc1(gap(x))))), then channel-wise rescale.
SeOut se_block_forward(Graph& g, const Var& features, const Var& w1, const Var& b1,
                       const Var& w2, const Var& b2);

struct SnOut {
    Var recon;                  // [N,1,H,W]
    std::vector<Var> features;  // per node
    std::vector<Var> weights;
};

struct DmeOut {
    Var output;            // [N,1,H,W]
    std::vector<Var> taps;  // per node, shapes match the SN bundle
};

ParamSet make_sn_params(const ArchConfig& cfg, Rng& rng);
ParamSet make_dme_params(const ArchConfig& cfg, Rng& rng);

// Two-branch encoder (groundtruth + image), channel concat with a 1x1 merge,
// then M stages of (deconv x2 -> conv -> SE); every stage contributes
// (G^n, W^n). gt_input: [N,1,H,W], image: [N,in_channels,H,W].
SnOut sn_forward(Graph& g, const Var& gt_input, const Var& image, ParamSet& params,
                 const ArchConfig& cfg);

// Encoder of 3 (conv s1 -> conv s2) blocks, decoder of M (conv -> deconv x2)
// sets with a tap after each set, then two convolutions and the head
// activation (relu for density maps, sigmoid for dot probability maps).
DmeOut dme_forward(Graph& g, const Var& image, ParamSet& params, const ArchConfig& cfg);

// Forward-only SN on plain tensors; used while the SN is frozen.
SupervisionBundle run_sn_bundle(ParamSet& sn_params, const ArchConfig& cfg,
                                const Tensor& gt_input, const Tensor& image,
                                Tensor* recon_out = nullptr);

}  // namespace mds
