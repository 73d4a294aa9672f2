#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mds/datagen.hpp"
#include "mds/grad_check.hpp"
#include "mds/metrics.hpp"
#include "mds/models.hpp"
#include "mds/supervision.hpp"

namespace mds {

struct RunConfig {
    LossConfig loss;
    ArchConfig arch;
    double lr = 1e-3;
    int epochs_sn = 30;
    int epochs_dme = 30;
    int batch = 4;
    std::uint64_t seed = 1;
    std::string data_dir;
    std::string out_dir;

    // MDS ablation knobs: how many decoder nodes receive supervision
    // (counted from the output side), and whether the equal-weight loss
    // replaces channel attention.
    int supervised_nodes = 3;
    bool equal_weight_loss = false;

    // groundtruth kernel selection; sigma 0 means the profile default
    double sigma = 0.0;
    bool adaptive = false;
    double adaptive_beta = 0.3;
    int adaptive_k = 3;

    void validate() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
};

struct TrainResult {
    std::string checkpoint_path;
    std::vector<double> epoch_losses;  // per-epoch mean of the total loss
};

// Stage 1: train the SupervisionNet to reconstruct the density map from
// (groundtruth input, image). In the dot regime the gt branch consumes the
// binary dot map while the target stays the continuous density map.
// Writes {out}/sn.ckpt, {out}/losses.csv, {out}/run_manifest.json.
TrainResult train_sn(const RunConfig& cfg);

// Stage 2: freeze the SN, train the DME under the combined objective
// (density regime) or dot cross-entropy + alpha * feature loss (dot regime).
// Writes {out}/dme.ckpt, {out}/losses.csv, {out}/run_manifest.json.
TrainResult train_dme(const RunConfig& cfg, const std::string& sn_checkpoint);

// Counts come from the output map sum in both regimes. PSNR/SSIM are map
// averages and only computed for the density regime (all-zero groundtruth
// maps are skipped). split is "train" or "test".
EvalReport evaluate_model(const std::string& dme_checkpoint, const RunConfig& cfg,
                          const std::string& split, const std::string& report_dir = "");

// Same aggregation over an arbitrary per-sample predictor returning an [H,W]
// map; evaluate_model wires the DME forward pass through this.
using Predictor = std::function<Tensor(const Sample&)>;
EvalReport evaluate_with_predictor(const Predictor& predict, const RunConfig& cfg,
                                   const std::string& split,
                                   const std::string& report_dir = "");

// Finite-difference suite entry: model is one of se|sn|dme|objective.
GradCheckReport run_model_grad_check(const std::string& model, const ArchConfig& arch,
                                     double eps, double tol, std::uint64_t seed,
                                     int input_size = 16);

std::uint64_t fnv1a_file_hash(const std::string& path);

}  // namespace mds
