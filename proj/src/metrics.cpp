#include "mds/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mds/errors.hpp"
#include "mds/nt1.hpp"

namespace mds {

using nlohmann::json;

static json opt_to_json(const std::optional<double>& v) {
    if (!v.has_value()) {
        return nullptr;
    }
    if (std::isinf(*v)) {
        return "+inf";
    }
    return *v;
}

static std::optional<double> opt_from_json(const json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    if (j.is_string()) {
        if (j.get<std::string>() == "+inf") {
            return std::numeric_limits<double>::infinity();
        }
        throw DataError("unexpected metric string: " + j.get<std::string>());
    }
    return j.get<double>();
}

std::string EvalReport::to_json() const {
    json j;
    j["mae"] = mae;
    j["mse"] = mse;
    j["psnr"] = opt_to_json(psnr);
    j["ssim"] = opt_to_json(ssim);
    j["n_samples"] = n_samples;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport r;
    r.mae = j.at("mae").get<double>();
    r.mse = j.at("mse").get<double>();
    r.psnr = opt_from_json(j.at("psnr"));
    r.ssim = opt_from_json(j.at("ssim"));
    r.n_samples = j.at("n_samples").get<int>();
    return r;
}

std::string EvalReport::csv_header() const {
    return "mae,mse,psnr,ssim,n_samples";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os << format_full(mae) << "," << format_full(mse) << ",";
    if (psnr.has_value()) {
        os << (std::isinf(*psnr) ? "+inf" : format_full(*psnr));
    }
    os << ",";
    if (ssim.has_value()) {
        os << format_full(*ssim);
    }
    os << "," << n_samples;
    return os.str();
}

std::pair<double, double> count_mae_mse(const std::vector<double>& gt_counts,
                                        const std::vector<double>& pred_counts) {
    if (gt_counts.empty() || gt_counts.size() != pred_counts.size()) {
        throw UsageError("count_mae_mse: non-empty lists of equal length required");
    }
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < gt_counts.size(); ++i) {
        double e = gt_counts[i] - pred_counts[i];
        abs_sum += std::fabs(e);
        sq_sum += e * e;
    }
    double n = static_cast<double>(gt_counts.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

static double gt_scale(const DensityMap& gt) {
    double m = max_of(gt.values);
    if (m <= 0.0) {
        throw DataError("metric scale undefined: groundtruth map is all zero");
    }
    return 1.0 / m;
}

static void check_same_size(const DensityMap& pred, const DensityMap& gt, const char* what) {
    if (pred.values.shape != gt.values.shape || pred.values.ndim() != 2) {
        throw UsageError(std::string(what) + ": maps must be equal-shape [H,W]");
    }
}

double psnr(const DensityMap& pred, const DensityMap& gt) {
    check_same_size(pred, gt, "psnr");
    const double s = gt_scale(gt);
    double mse_px = 0.0;
    for (std::size_t i = 0; i < gt.values.data.size(); ++i) {
        double d = (pred.values.data[i] - gt.values.data[i]) * s;
        mse_px += d * d;
    }
    mse_px /= static_cast<double>(gt.values.data.size());
    if (mse_px == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse_px);
}

double ssim(const DensityMap& pred, const DensityMap& gt) {
    check_same_size(pred, gt, "ssim");
    const int H = gt.values.dim(0), W = gt.values.dim(1);
    constexpr int win = 11;
    if (H < win || W < win) {
        throw UsageError("ssim: image smaller than the 11x11 window");
    }
    const double s = gt_scale(gt);

    // normalized 11x11 Gaussian window, sigma 1.5
    double kernel[win][win];
    {
        double total = 0.0;
        const double inv2s2 = 1.0 / (2.0 * 1.5 * 1.5);
        for (int u = 0; u < win; ++u) {
            for (int v = 0; v < win; ++v) {
                double du = u - 5, dv = v - 5;
                kernel[u][v] = std::exp(-(du * du + dv * dv) * inv2s2);
                total += kernel[u][v];
            }
        }
        for (auto& row : kernel) {
            for (double& kv : row) {
                kv /= total;
            }
        }
    }

    constexpr double c1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1 after scaling
    constexpr double c2 = 0.03 * 0.03;
    double acc = 0.0;
    std::int64_t windows = 0;
    for (int r = 0; r + win <= H; ++r) {
        for (int c = 0; c + win <= W; ++c) {
            double mx = 0.0, my = 0.0;
            for (int u = 0; u < win; ++u) {
                const double* px = pred.values.data.data() + static_cast<std::size_t>(r + u) * W + c;
                const double* py = gt.values.data.data() + static_cast<std::size_t>(r + u) * W + c;
                for (int v = 0; v < win; ++v) {
                    mx += kernel[u][v] * px[v] * s;
                    my += kernel[u][v] * py[v] * s;
                }
            }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int u = 0; u < win; ++u) {
                const double* px = pred.values.data.data() + static_cast<std::size_t>(r + u) * W + c;
                const double* py = gt.values.data.data() + static_cast<std::size_t>(r + u) * W + c;
                for (int v = 0; v < win; ++v) {
                    double dx = px[v] * s - mx;
                    double dy = py[v] * s - my;
                    vx += kernel[u][v] * dx * dx;
                    vy += kernel[u][v] * dy * dy;
                    cov += kernel[u][v] * dx * dy;
                }
            }
            double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            acc += num / den;
            windows += 1;
        }
    }
    return acc / static_cast<double>(windows);
}

}  // namespace mds
