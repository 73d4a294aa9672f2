#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mds/groundtruth.hpp"
#include "mds/rng.hpp"
#include "mds/tensor.hpp"

namespace mds {

enum class DensityProfile { dense, sparse };

const char* profile_name(DensityProfile p);
DensityProfile profile_from_name(const std::string& name);

// Fixed-sigma pairing: dense scenes use 5 px kernels, sparse 15 px.
double default_sigma(DensityProfile p);

struct SceneConfig {
    int size = 64;  // square, divisible by 8
    int count_min = 5;
    int count_max = 20;
    double blob_radius_min = 2.0;
    double blob_radius_max = 4.0;
    double noise_std = 0.02;
    std::uint64_t seed = 1;
    DensityProfile profile = DensityProfile::dense;

    void validate() const;
};

struct Sample {
    Tensor image;  // [1,H,W] in [0,1]
    DotAnnotation annotation;
};

// Deterministic in (cfg.seed, index): blob count, positions (minimum
// separation 2 px dense / 8 px sparse), radial-falloff intensities and
// clamped Gaussian pixel noise all derive from one per-index stream.
Sample generate_scene(const SceneConfig& cfg, int index);

// Deterministic augmentation core: crop at (origin_x, origin_y), optional
// horizontal flip, gamma transform. Dots outside the crop are dropped.
Sample augment_with(const Sample& s, int crop, int origin_x, int origin_y,
                    bool flip, double gamma);

// Random crop + flip(p=0.5) + gamma in [0.8, 1.25], drawn from rng.
Sample augment(const Sample& s, int crop, Rng& rng);

// On-disk layout: images/{id}.pgm, annotations/{id}.csv, manifest.json.
struct DatasetManifest {
    SceneConfig config;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

void write_dataset(const std::string& dir, const SceneConfig& cfg, int n_train, int n_test,
                   int augment_crop = 0);
DatasetManifest read_manifest(const std::string& dir);
Sample load_sample(const std::string& dir, const std::string& id);

}  // namespace mds
