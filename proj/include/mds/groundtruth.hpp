#pragma once

#include <string>
#include <vector>

#include "mds/tensor.hpp"

namespace mds {

// Head coordinates for one image, pixel units, x right / y down.
struct DotAnnotation {
    std::string image_id;
    std::vector<std::pair<double, double>> points;  // (x, y), in-bounds
    int height = 0;
    int width = 0;

    int count() const { return static_cast<int>(points.size()); }
};

// H x W non-negative map whose sum is the crowd count.
struct DensityMap {
    Tensor values;  // [H,W]
    double count = 0.0;
};

// Binary head-position raster plus bookkeeping for collapsed/dropped dots.
struct DotMap {
    Tensor values;  // [H,W], entries exactly 0 or 1
    int collisions = 0;
    int out_of_bounds = 0;
};

struct ParsedAnnotation {
    DotAnnotation annotation;
    int rejected_points = 0;  // out-of-bounds rows in the file
};

// CSV with header "x,y"; one point per line. Malformed lines raise a
// DataError naming the line number; out-of-bounds points are dropped and
// counted.
ParsedAnnotation parse_dot_annotations(const std::string& path, int height, int width);

void save_dot_annotations(const std::string& path, const DotAnnotation& ann);

// Fixed-bandwidth Gaussian splat per dot, truncated at radius ceil(3*sigma)
// and renormalized to unit mass after truncation (border dots included), so
// sum(map) == count holds exactly up to rounding.
DensityMap gaussian_density_map(const DotAnnotation& ann, double sigma);

// Per-dot sigma_i = beta * mean distance to the k nearest other dots; dots
// with fewer than k neighbours fall back to fallback_sigma.
DensityMap adaptive_density_map(const DotAnnotation& ann, double beta, int k,
                                double fallback_sigma);

std::vector<double> adaptive_sigmas(const DotAnnotation& ann, double beta, int k,
                                    double fallback_sigma);

// Rounds each dot half-up in both axes; colliding dots collapse to one.
DotMap dot_target_map(const DotAnnotation& ann);

}  // namespace mds
