#include "mds/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mds/errors.hpp"
#include "mds/nt1.hpp"

namespace mds {

ParsedAnnotation parse_dot_annotations(const std::string& path, int height, int width) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open annotation file: " + path);
    }
    ParsedAnnotation out;
    out.annotation.height = height;
    out.annotation.width = width;
    {
        auto slash = path.find_last_of('/');
        auto base = slash == std::string::npos ? path : path.substr(slash + 1);
        auto dot = base.find_last_of('.');
        out.annotation.image_id = dot == std::string::npos ? base : base.substr(0, dot);
    }
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (!header_seen) {
            if (line != "x,y") {
                throw DataError(path + ":" + std::to_string(lineno) + ": expected header 'x,y'");
            }
            header_seen = true;
            continue;
        }
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 'x,y'");
        }
        double x, y;
        try {
            std::size_t used = 0;
            x = std::stod(line.substr(0, comma), &used);
            if (used != comma) {
                throw std::invalid_argument("trailing junk");
            }
            std::string ypart = line.substr(comma + 1);
            y = std::stod(ypart, &used);
            if (used != ypart.size()) {
                throw std::invalid_argument("trailing junk");
            }
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": malformed coordinate");
        }
        if (x < 0.0 || x >= width || y < 0.0 || y >= height) {
            out.rejected_points += 1;
            continue;
        }
        out.annotation.points.emplace_back(x, y);
    }
    if (!header_seen) {
        throw DataError(path + ": missing 'x,y' header");
    }
    return out;
}

void save_dot_annotations(const std::string& path, const DotAnnotation& ann) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for write: " + path);
    }
    os << "x,y\n";
    for (const auto& [x, y] : ann.points) {
        os << format_full(x) << "," << format_full(y) << "\n";
    }
    if (!os) {
        throw DataError("write failed: " + path);
    }
}

// Adds one unit-mass truncated Gaussian centered at (x, y).
static void splat(Tensor& map, int H, int W, double x, double y, double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    int r0 = std::max(0, static_cast<int>(std::floor(y)) - radius);
    int r1 = std::min(H - 1, static_cast<int>(std::ceil(y)) + radius);
    int c0 = std::max(0, static_cast<int>(std::floor(x)) - radius);
    int c1 = std::min(W - 1, static_cast<int>(std::ceil(x)) + radius);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double mass = 0.0;
    for (int r = r0; r <= r1; ++r) {
        double dy = r - y;
        for (int c = c0; c <= c1; ++c) {
            double dx = c - x;
            mass += std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    if (mass <= 0.0) {
        return;  // unreachable for in-bounds dots and sigma > 0
    }
    const double inv_mass = 1.0 / mass;
    for (int r = r0; r <= r1; ++r) {
        double dy = r - y;
        for (int c = c0; c <= c1; ++c) {
            double dx = c - x;
            map.data[static_cast<std::size_t>(r) * W + c] +=
                std::exp(-(dx * dx + dy * dy) * inv2s2) * inv_mass;
        }
    }
}

DensityMap gaussian_density_map(const DotAnnotation& ann, double sigma) {
    if (sigma <= 0.0) {
        throw UsageError("gaussian_density_map: sigma must be positive");
    }
    DensityMap dm;
    dm.values = Tensor({ann.height, ann.width});
    for (const auto& [x, y] : ann.points) {
        splat(dm.values, ann.height, ann.width, x, y, sigma);
    }
    dm.count = static_cast<double>(ann.count());
    return dm;
}

std::vector<double> adaptive_sigmas(const DotAnnotation& ann, double beta, int k,
                                    double fallback_sigma) {
    if (beta <= 0.0 || k < 1) {
        throw UsageError("adaptive_sigmas: beta > 0 and k >= 1 required");
    }
    const int n = ann.count();
    std::vector<double> sigmas(static_cast<std::size_t>(n), fallback_sigma);
    if (n - 1 < k) {
        return sigmas;  // not enough neighbours anywhere
    }
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n; ++i) {
        dists.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            double dx = ann.points[i].first - ann.points[j].first;
            double dy = ann.points[i].second - ann.points[j].second;
            dists.push_back(std::sqrt(dx * dx + dy * dy));
        }
        std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
        double mean = 0.0;
        for (int j = 0; j < k; ++j) {
            mean += dists[static_cast<std::size_t>(j)];
        }
        mean /= k;
        sigmas[static_cast<std::size_t>(i)] = beta * mean;
    }
    return sigmas;
}

DensityMap adaptive_density_map(const DotAnnotation& ann, double beta, int k,
                                double fallback_sigma) {
    std::vector<double> sigmas = adaptive_sigmas(ann, beta, k, fallback_sigma);
    DensityMap dm;
    dm.values = Tensor({ann.height, ann.width});
    for (int i = 0; i < ann.count(); ++i) {
        double sigma = sigmas[static_cast<std::size_t>(i)];
        if (sigma <= 0.0) {
            sigma = fallback_sigma;  // coincident dots give zero distance
        }
        splat(dm.values, ann.height, ann.width, ann.points[i].first, ann.points[i].second, sigma);
    }
    dm.count = static_cast<double>(ann.count());
    return dm;
}

DotMap dot_target_map(const DotAnnotation& ann) {
    DotMap dm;
    dm.values = Tensor({ann.height, ann.width});
    for (const auto& [x, y] : ann.points) {
        int c = static_cast<int>(std::floor(x + 0.5));
        int r = static_cast<int>(std::floor(y + 0.5));
        if (r < 0 || r >= ann.height || c < 0 || c >= ann.width) {
            dm.out_of_bounds += 1;
            continue;
        }
        double& cell = dm.values.data[static_cast<std::size_t>(r) * ann.width + c];
        if (cell != 0.0) {
            dm.collisions += 1;
        } else {
            cell = 1.0;
        }
    }
    return dm;
}

}  // namespace mds
