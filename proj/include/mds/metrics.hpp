#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mds/groundtruth.hpp"

namespace mds {

struct EvalReport {
    double mae = 0.0;
    double mse = 0.0;  // root-mean-squared count error
    std::optional<double> psnr;  // +inf sentinel for identical maps
    std::optional<double> ssim;
    int n_samples = 0;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    std::string csv_header() const;
    std::string csv_row() const;
};

// MAE = mean |Y - Yhat|; MSE = sqrt(mean (Y - Yhat)^2). N >= 1.
std::pair<double, double> count_mae_mse(const std::vector<double>& gt_counts,
                                        const std::vector<double>& pred_counts);

// Both maps are scaled by 1/max(gt) so the peak is 1.0; identical maps give
// the +inf sentinel. All-zero groundtruth has no scale and is an error.
double psnr(const DensityMap& pred, const DensityMap& gt);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), over windows fully
// inside the image; maps share the psnr normalization, so L = 1.
double ssim(const DensityMap& pred, const DensityMap& gt);

}  // namespace mds
