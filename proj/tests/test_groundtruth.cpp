#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mds/errors.hpp"
#include "mds/groundtruth.hpp"
#include "mds/rng.hpp"

using namespace mds;

namespace {

void write_file(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    os << body;
}

// Oracle: loop over every pixel of the image for every dot, recompute the
// truncated-window mass from scratch, then normalize. No shared code with
// the splat routine.
Tensor density_oracle(const DotAnnotation& ann, double sigma) {
    Tensor map({ann.height, ann.width});
    double radius = std::ceil(3.0 * sigma);
    for (const auto& [x, y] : ann.points) {
        double mass = 0.0;
        for (int r = 0; r < ann.height; ++r) {
            for (int c = 0; c < ann.width; ++c) {
                if (c >= std::floor(x) - radius && c <= std::ceil(x) + radius &&
                    r >= std::floor(y) - radius && r <= std::ceil(y) + radius) {
                    mass += std::exp(-((c - x) * (c - x) + (r - y) * (r - y)) /
                                     (2.0 * sigma * sigma));
                }
            }
        }
        for (int r = 0; r < ann.height; ++r) {
            for (int c = 0; c < ann.width; ++c) {
                if (c >= std::floor(x) - radius && c <= std::ceil(x) + radius &&
                    r >= std::floor(y) - radius && r <= std::ceil(y) + radius) {
                    map.data[static_cast<std::size_t>(r) * ann.width + c] +=
                        std::exp(-((c - x) * (c - x) + (r - y) * (r - y)) /
                                 (2.0 * sigma * sigma)) /
                        mass;
                }
            }
        }
    }
    return map;
}

DotAnnotation make_ann(int h, int w, std::vector<std::pair<double, double>> pts) {
    DotAnnotation ann;
    ann.image_id = "test";
    ann.height = h;
    ann.width = w;
    ann.points = std::move(pts);
    return ann;
}

}  // namespace

TEST_CASE("parse: empty body, valid rows, bounds, malformed rows") {
    const std::string path = "/tmp/mds_ann_test.csv";

    write_file(path, "x,y\n");
    auto parsed = parse_dot_annotations(path, 64, 64);
    CHECK(parsed.annotation.count() == 0);
    CHECK(parsed.rejected_points == 0);

    write_file(path, "x,y\n10.5,20\n3,4\n");
    parsed = parse_dot_annotations(path, 64, 64);
    CHECK(parsed.annotation.count() == 2);
    CHECK(parsed.annotation.points[0].first == doctest::Approx(10.5));

    write_file(path, "x,y\n70,3\n");
    parsed = parse_dot_annotations(path, 64, 64);
    CHECK(parsed.annotation.count() == 0);
    CHECK(parsed.rejected_points == 1);

    write_file(path, "x,y\n1,2\nbogus\n");
    try {
        parse_dot_annotations(path, 64, 64);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);  // line number
    }

    write_file(path, "a,b\n1,2\n");
    CHECK_THROWS_AS(parse_dot_annotations(path, 64, 64), DataError);
}

TEST_CASE("gaussian density: unit mass per dot, center and corner") {
    auto center = gaussian_density_map(make_ann(64, 64, {{32.0, 32.0}}), 5.0);
    CHECK(sum_of(center.values) == doctest::Approx(1.0).epsilon(1e-9));

    auto corner = gaussian_density_map(make_ann(64, 64, {{0.0, 0.0}}), 5.0);
    CHECK(sum_of(corner.values) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(corner.count == 1.0);
}

TEST_CASE("gaussian density matches the per-pixel oracle map") {
    Rng rng(101);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 10; ++i) {
        pts.emplace_back(rng.uniform(0.0, 63.999), rng.uniform(0.0, 63.999));
    }
    DotAnnotation ann = make_ann(64, 64, pts);
    auto dm = gaussian_density_map(ann, 5.0);
    CHECK(std::fabs(sum_of(dm.values) - 10.0) < 1e-6);

    Tensor expect = density_oracle(ann, 5.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < expect.data.size(); ++i) {
        worst = std::max(worst, std::fabs(expect.data[i] - dm.values.data[i]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("mass conservation holds for border-heavy annotations") {
    Rng rng(103);
    for (int rep = 0; rep < 20; ++rep) {
        int n = static_cast<int>(rng.uniform_int(30));
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < n; ++i) {
            if (rng.bernoulli(0.5)) {
                pts.emplace_back(rng.bernoulli(0.5) ? 0.0 : 63.0, rng.uniform(0.0, 63.999));
            } else {
                pts.emplace_back(rng.uniform(0.0, 63.999), rng.uniform(0.0, 63.999));
            }
        }
        for (double sigma : {5.0, 15.0}) {
            auto dm = gaussian_density_map(make_ann(64, 64, pts), sigma);
            CHECK(std::fabs(sum_of(dm.values) - n) < 1e-6);
        }
    }
}

TEST_CASE("translation equivariance for interior dots") {
    double sigma = 2.0;
    auto a = gaussian_density_map(make_ann(64, 64, {{20.25, 22.5}}), sigma);
    auto b = gaussian_density_map(make_ann(64, 64, {{25.25, 29.5}}), sigma);
    // shift (dx,dy) = (5,7); compare pixel-exact over the unclipped region
    for (int r = 0; r < 50; ++r) {
        for (int c = 0; c < 50; ++c) {
            CHECK(a.values.data[static_cast<std::size_t>(r) * 64 + c] ==
                  b.values.data[static_cast<std::size_t>(r + 7) * 64 + c + 5]);
        }
    }
}

TEST_CASE("adaptive sigmas: fallback, pair distance, monotonicity") {
    auto single = adaptive_density_map(make_ann(64, 64, {{10.0, 10.0}}), 0.3, 3, 5.0);
    CHECK(sum_of(single.values) == doctest::Approx(1.0).epsilon(1e-9));
    auto sig_single = adaptive_sigmas(make_ann(64, 64, {{10.0, 10.0}}), 0.3, 3, 5.0);
    CHECK(sig_single[0] == doctest::Approx(5.0));

    auto pair = adaptive_sigmas(make_ann(64, 64, {{10.0, 10.0}, {20.0, 10.0}}), 0.3, 1, 5.0);
    CHECK(pair[0] == doctest::Approx(3.0));
    CHECK(pair[1] == doctest::Approx(3.0));

    // dense cluster vs a spread copy of itself
    std::vector<std::pair<double, double>> cluster = {
        {30.0, 30.0}, {31.0, 30.0}, {30.0, 31.5}, {32.0, 31.0}};
    std::vector<std::pair<double, double>> spread;
    for (auto [x, y] : cluster) {
        spread.emplace_back((x - 30.0) * 3.0 + 20.0, (y - 30.0) * 3.0 + 20.0);
    }
    auto s_cluster = adaptive_sigmas(make_ann(64, 64, cluster), 0.3, 2, 5.0);
    auto s_spread = adaptive_sigmas(make_ann(64, 64, spread), 0.3, 2, 5.0);
    for (std::size_t i = 0; i < s_cluster.size(); ++i) {
        CHECK(s_cluster[i] < s_spread[i]);
        CHECK(s_spread[i] == doctest::Approx(3.0 * s_cluster[i]).epsilon(1e-12));
    }
}

TEST_CASE("adaptive density conserves mass") {
    Rng rng(107);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<std::pair<double, double>> pts;
        int n = 2 + static_cast<int>(rng.uniform_int(20));
        for (int i = 0; i < n; ++i) {
            pts.emplace_back(rng.uniform(0.0, 63.999), rng.uniform(0.0, 63.999));
        }
        auto dm = adaptive_density_map(make_ann(64, 64, pts), 0.3, 3, 5.0);
        CHECK(std::fabs(sum_of(dm.values) - n) < 1e-6);
    }
}

TEST_CASE("dot map: rounding convention, collisions, binary values") {
    auto dm = dot_target_map(make_ann(64, 64, {{10.4, 20.6}}));
    CHECK(dm.values.data[21 * 64 + 10] == 1.0);
    CHECK(sum_of(dm.values) == 1.0);

    auto empty = dot_target_map(make_ann(64, 64, {}));
    CHECK(sum_of(empty.values) == 0.0);

    auto collide = dot_target_map(make_ann(64, 64, {{10.2, 20.2}, {10.4, 19.8}}));
    CHECK(sum_of(collide.values) == 1.0);
    CHECK(collide.collisions == 1);

    // a dot whose rounded pixel falls outside stays out of the raster
    auto edge = dot_target_map(make_ann(64, 64, {{63.7, 5.0}}));
    CHECK(sum_of(edge.values) == 0.0);
    CHECK(edge.out_of_bounds == 1);

    Rng rng(109);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 40; ++i) {
        pts.emplace_back(rng.uniform(0.0, 63.999), rng.uniform(0.0, 63.999));
    }
    auto big = dot_target_map(make_ann(64, 64, pts));
    for (double v : big.values.data) {
        CHECK((v == 0.0 || v == 1.0));
    }
    CHECK(sum_of(big.values) + big.collisions + big.out_of_bounds == 40.0);
}

TEST_CASE("annotation save/load round trip") {
    DotAnnotation ann = make_ann(32, 32, {{1.25, 2.5}, {30.0, 31.75}});
    const std::string path = "/tmp/mds_ann_roundtrip.csv";
    save_dot_annotations(path, ann);
    auto back = parse_dot_annotations(path, 32, 32);
    REQUIRE(back.annotation.count() == 2);
    CHECK(back.annotation.points[0].first == 1.25);
    CHECK(back.annotation.points[1].second == 31.75);
}
