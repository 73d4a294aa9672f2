#include "mds/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mds/errors.hpp"
#include "mds/pgm.hpp"

namespace mds {

namespace fs = std::filesystem;
using nlohmann::json;

const char* profile_name(DensityProfile p) {
    return p == DensityProfile::dense ? "dense" : "sparse";
}

DensityProfile profile_from_name(const std::string& name) {
    if (name == "dense") {
        return DensityProfile::dense;
    }
    if (name == "sparse") {
        return DensityProfile::sparse;
    }
    throw UsageError("unknown density profile: " + name);
}

double default_sigma(DensityProfile p) {
    return p == DensityProfile::dense ? 5.0 : 15.0;
}

void SceneConfig::validate() const {
    if (size <= 0 || size % 8 != 0) {
        throw ConfigError("scene size must be positive and divisible by 8");
    }
    if (count_min > count_max || count_min < 0) {
        throw ConfigError("invalid count range");
    }
    if (blob_radius_min > blob_radius_max || blob_radius_min <= 0.0) {
        throw ConfigError("invalid blob radius range");
    }
    if (noise_std < 0.0) {
        throw ConfigError("noise_std must be non-negative");
    }
}

static double min_separation(DensityProfile p) {
    return p == DensityProfile::dense ? 2.0 : 8.0;
}

Sample generate_scene(const SceneConfig& cfg, int index) {
    cfg.validate();
    Rng rng = Rng::for_index(cfg.seed, static_cast<std::uint64_t>(index));
    const int sz = cfg.size;

    int count = cfg.count_min +
                static_cast<int>(rng.uniform_int(cfg.count_max - cfg.count_min + 1));

    // rejection-sample positions; after 10*count failures retry without the
    // separation constraint
    std::vector<std::pair<double, double>> centers;
    double sep = min_separation(cfg.profile);
    int attempts_left = 10 * std::max(1, count);
    while (static_cast<int>(centers.size()) < count) {
        double x = rng.uniform(0.0, static_cast<double>(sz) - 1e-9);
        double y = rng.uniform(0.0, static_cast<double>(sz) - 1e-9);
        bool ok = true;
        for (const auto& [cx, cy] : centers) {
            double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy < sep * sep) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.emplace_back(x, y);
        } else if (--attempts_left <= 0) {
            if (sep > 0.0) {
                sep = 0.0;  // relaxed retry
                attempts_left = 10 * std::max(1, count);
            } else {
                throw DataError("generate_scene: cannot place blobs");
            }
        }
    }

    Sample s;
    s.image = Tensor({1, sz, sz});
    s.annotation.image_id = "s" + std::to_string(index);
    s.annotation.height = sz;
    s.annotation.width = sz;
    for (const auto& [x, y] : centers) {
        double radius = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
        double intensity = rng.uniform(0.4, 1.0);
        int r0 = std::max(0, static_cast<int>(std::floor(y - radius)));
        int r1 = std::min(sz - 1, static_cast<int>(std::ceil(y + radius)));
        int c0 = std::max(0, static_cast<int>(std::floor(x - radius)));
        int c1 = std::min(sz - 1, static_cast<int>(std::ceil(x + radius)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                double dx = c - x, dy = r - y;
                double d = std::sqrt(dx * dx + dy * dy);
                if (d <= radius) {
                    double falloff = 1.0 - d / radius;
                    double& px = s.image.data[static_cast<std::size_t>(r) * sz + c];
                    px = std::min(1.0, px + intensity * falloff);
                }
            }
        }
        s.annotation.points.emplace_back(x, y);
    }
    if (cfg.noise_std > 0.0) {
        for (double& px : s.image.data) {
            px = std::min(1.0, std::max(0.0, px + rng.normal(0.0, cfg.noise_std)));
        }
    }
    return s;
}

Sample augment_with(const Sample& s, int crop, int origin_x, int origin_y,
                    bool flip, double gamma) {
    const int H = s.annotation.height, W = s.annotation.width;
    if (crop <= 0 || crop % 8 != 0 || crop > H || crop > W) {
        throw UsageError("augment: crop must be divisible by 8 and fit the image");
    }
    if (origin_x < 0 || origin_y < 0 || origin_x + crop > W || origin_y + crop > H) {
        throw UsageError("augment: crop window out of bounds");
    }
    Sample out;
    out.image = Tensor({1, crop, crop});
    out.annotation.image_id = s.annotation.image_id;
    out.annotation.height = crop;
    out.annotation.width = crop;
    for (int r = 0; r < crop; ++r) {
        for (int c = 0; c < crop; ++c) {
            int sc = flip ? (crop - 1 - c) : c;
            double v = s.image.data[static_cast<std::size_t>(origin_y + r) * W + origin_x + sc];
            out.image.data[static_cast<std::size_t>(r) * crop + c] = std::pow(v, gamma);
        }
    }
    for (const auto& [x, y] : s.annotation.points) {
        double cx = x - origin_x;
        double cy = y - origin_y;
        if (cx < 0.0 || cx >= crop || cy < 0.0 || cy >= crop) {
            continue;
        }
        if (flip) {
            cx = static_cast<double>(crop - 1) - cx;
        }
        out.annotation.points.emplace_back(cx, cy);
    }
    return out;
}

Sample augment(const Sample& s, int crop, Rng& rng) {
    const int H = s.annotation.height, W = s.annotation.width;
    int oy = static_cast<int>(rng.uniform_int(H - crop + 1));
    int ox = static_cast<int>(rng.uniform_int(W - crop + 1));
    bool flip = rng.bernoulli(0.5);
    double gamma = rng.uniform(0.8, 1.25);
    return augment_with(s, crop, ox, oy, flip, gamma);
}

static json config_to_json(const SceneConfig& cfg) {
    json j;
    j["size"] = cfg.size;
    j["count_min"] = cfg.count_min;
    j["count_max"] = cfg.count_max;
    j["blob_radius_min"] = cfg.blob_radius_min;
    j["blob_radius_max"] = cfg.blob_radius_max;
    j["noise_std"] = cfg.noise_std;
    j["seed"] = cfg.seed;
    j["profile"] = profile_name(cfg.profile);
    return j;
}

static SceneConfig config_from_json(const json& j) {
    SceneConfig cfg;
    cfg.size = j.at("size").get<int>();
    cfg.count_min = j.at("count_min").get<int>();
    cfg.count_max = j.at("count_max").get<int>();
    cfg.blob_radius_min = j.at("blob_radius_min").get<double>();
    cfg.blob_radius_max = j.at("blob_radius_max").get<double>();
    cfg.noise_std = j.at("noise_std").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.profile = profile_from_name(j.at("profile").get<std::string>());
    return cfg;
}

void write_dataset(const std::string& dir, const SceneConfig& cfg, int n_train, int n_test,
                   int augment_crop) {
    cfg.validate();
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "annotations");
    json manifest;
    SceneConfig effective = cfg;
    if (augment_crop > 0) {
        effective.size = augment_crop;  // stored size is the final size
    }
    manifest["scene"] = config_to_json(effective);
    manifest["generator_size"] = cfg.size;
    manifest["augment_crop"] = augment_crop;
    json train_ids = json::array(), test_ids = json::array();
    for (int i = 0; i < n_train + n_test; ++i) {
        Sample s = generate_scene(cfg, i);
        if (augment_crop > 0) {
            Rng arng = Rng::for_index(cfg.seed ^ 0xa4a4a4a4ull, static_cast<std::uint64_t>(i));
            s = augment(s, augment_crop, arng);
        }
        const std::string id = s.annotation.image_id;
        Tensor hw = Tensor::from({s.image.dim(1), s.image.dim(2)}, s.image.data);
        save_pgm((fs::path(dir) / "images" / (id + ".pgm")).string(), hw);
        save_dot_annotations((fs::path(dir) / "annotations" / (id + ".csv")).string(),
                             s.annotation);
        (i < n_train ? train_ids : test_ids).push_back(id);
    }
    manifest["train_ids"] = train_ids;
    manifest["test_ids"] = test_ids;
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) {
        throw DataError("cannot write manifest in " + dir);
    }
    os << manifest.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) {
        throw DataError("missing manifest.json in " + dir);
    }
    json j = json::parse(is);
    DatasetManifest m;
    m.config = config_from_json(j.at("scene"));
    for (const auto& id : j.at("train_ids")) {
        m.train_ids.push_back(id.get<std::string>());
    }
    for (const auto& id : j.at("test_ids")) {
        m.test_ids.push_back(id.get<std::string>());
    }
    return m;
}

Sample load_sample(const std::string& dir, const std::string& id) {
    Sample s;
    Tensor hw = load_pgm((fs::path(dir) / "images" / (id + ".pgm")).string());
    int H = hw.dim(0), W = hw.dim(1);
    s.image = Tensor::from({1, H, W}, std::move(hw.data));
    auto parsed =
        parse_dot_annotations((fs::path(dir) / "annotations" / (id + ".csv")).string(), H, W);
    s.annotation = std::move(parsed.annotation);
    return s;
}

}  // namespace mds
