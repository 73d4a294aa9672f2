#include <doctest.h>

#include <cmath>
#include <limits>

#include "mds/errors.hpp"
#include "mds/metrics.hpp"
#include "mds/rng.hpp"

using namespace mds;

namespace {

DensityMap map_from(std::vector<int> shape, std::vector<double> values) {
    DensityMap m;
    m.values = Tensor::from(std::move(shape), std::move(values));
    m.count = sum_of(m.values);
    return m;
}

// Oracle: literal transcription of the windowed SSIM formula with explicit
// loops, kept apart from the library implementation.
double ssim_oracle(const DensityMap& pred, const DensityMap& gt) {
    int H = gt.values.dim(0), W = gt.values.dim(1);
    double scale = 1.0 / max_of(gt.values);
    double kernel[11][11];
    double ksum = 0.0;
    for (int u = 0; u < 11; ++u) {
        for (int v = 0; v < 11; ++v) {
            kernel[u][v] = std::exp(-((u - 5.0) * (u - 5.0) + (v - 5.0) * (v - 5.0)) /
                                    (2.0 * 2.25));
            ksum += kernel[u][v];
        }
    }
    double total = 0.0;
    int count = 0;
    for (int r = 0; r + 11 <= H; ++r) {
        for (int c = 0; c + 11 <= W; ++c) {
            double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
            for (int u = 0; u < 11; ++u) {
                for (int v = 0; v < 11; ++v) {
                    double k = kernel[u][v] / ksum;
                    double px = pred.values.data[static_cast<std::size_t>(r + u) * W + c + v] * scale;
                    double py = gt.values.data[static_cast<std::size_t>(r + u) * W + c + v] * scale;
                    mx += k * px;
                    my += k * py;
                    xx += k * px * px;
                    yy += k * py * py;
                    xy += k * px * py;
                }
            }
            double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
            double c1 = 1e-4, c2 = 9e-4;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    return total / count;
}

}  // namespace

TEST_CASE("count MAE/MSE: identical, direct case, single sample, empty") {
    auto [mae0, mse0] = count_mae_mse({5.0, 7.0}, {5.0, 7.0});
    CHECK(mae0 == 0.0);
    CHECK(mse0 == 0.0);

    auto [mae, mse] = count_mae_mse({10.0, 20.0}, {12.0, 16.0});
    CHECK(mae == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(mse == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));

    auto [mae1, mse1] = count_mae_mse({4.0}, {6.5});
    CHECK(mae1 == doctest::Approx(2.5));
    CHECK(mse1 == doctest::Approx(2.5));

    CHECK_THROWS_AS(count_mae_mse({}, {}), UsageError);
    CHECK_THROWS_AS(count_mae_mse({1.0}, {1.0, 2.0}), UsageError);
}

TEST_CASE("psnr: sentinel, direct values, undefined scale") {
    DensityMap gt = map_from({4, 4}, std::vector<double>(16, 0.0));
    gt.values.data[5] = 2.0;  // peak 2 -> scale 1/2
    DensityMap same = gt;
    CHECK(std::isinf(psnr(same, gt)));

    // pred = gt + 0.2 everywhere: scaled diff 0.1, pixel MSE 0.01 -> 20 dB
    DensityMap pred = gt;
    for (double& v : pred.values.data) {
        v += 0.2;
    }
    CHECK(psnr(pred, gt) == doctest::Approx(20.0).epsilon(1e-12));

    // scaled pixel MSE 1.0 -> 0 dB
    DensityMap pred2 = gt;
    for (double& v : pred2.values.data) {
        v += 2.0;
    }
    CHECK(psnr(pred2, gt) == doctest::Approx(0.0).epsilon(1e-12));

    DensityMap zeros = map_from({4, 4}, std::vector<double>(16, 0.0));
    CHECK_THROWS_AS(psnr(pred, zeros), DataError);
}

TEST_CASE("psnr strictly decreases as pixel error grows") {
    Rng rng(3);
    DensityMap gt;
    gt.values = Tensor({8, 8});
    for (double& v : gt.values.data) {
        v = rng.uniform(0.0, 1.0);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double delta : {0.01, 0.02, 0.05, 0.1, 0.5}) {
        DensityMap pred = gt;
        for (double& v : pred.values.data) {
            v += delta;
        }
        double p = psnr(pred, gt);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim: identity is exactly one; window size is enforced") {
    Rng rng(5);
    DensityMap gt;
    gt.values = Tensor({16, 16});
    for (double& v : gt.values.data) {
        v = rng.uniform(0.0, 1.0);
    }
    CHECK(ssim(gt, gt) == 1.0);

    DensityMap small = map_from({8, 8}, std::vector<double>(64, 1.0));
    CHECK_THROWS_AS(ssim(small, small), UsageError);
}

TEST_CASE("ssim: contrast inversion matches the hand-windowed oracle") {
    DensityMap gt;
    gt.values = Tensor({16, 16});
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            gt.values.data[static_cast<std::size_t>(r) * 16 + c] = ((r / 4 + c / 4) % 2) ? 1.0 : 0.0;
        }
    }
    DensityMap pred = gt;
    for (double& v : pred.values.data) {
        v = 1.0 - v;
    }
    double got = ssim(pred, gt);
    CHECK(got < 1.0);
    CHECK(got == doctest::Approx(ssim_oracle(pred, gt)).epsilon(1e-10));
    CHECK(got >= -1.0);
}

TEST_CASE("ssim symmetry when both maps share the same peak") {
    Rng rng(7);
    DensityMap a, b;
    a.values = Tensor({16, 16});
    b.values = Tensor({16, 16});
    for (double& v : a.values.data) {
        v = rng.uniform(0.0, 1.0);
    }
    for (double& v : b.values.data) {
        v = rng.uniform(0.0, 1.0);
    }
    a.values.data[0] = 1.0;  // pin identical peaks so the scaling matches
    b.values.data[0] = 1.0;
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("ssim stays within [-1, 1] on random pairs") {
    Rng rng(9);
    for (int rep = 0; rep < 5; ++rep) {
        DensityMap a, b;
        a.values = Tensor({12, 12});
        b.values = Tensor({12, 12});
        for (double& v : a.values.data) {
            v = rng.uniform(0.0, 2.0);
        }
        for (double& v : b.values.data) {
            v = rng.uniform(0.0, 2.0);
        }
        double s = ssim(a, b);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("eval report JSON and CSV round trip, including the +inf sentinel") {
    EvalReport r;
    r.mae = 3.25;
    r.mse = 4.5;
    r.psnr = std::numeric_limits<double>::infinity();
    r.ssim = 0.875;
    r.n_samples = 64;
    EvalReport back = EvalReport::from_json(r.to_json());
    CHECK(back.mae == r.mae);
    CHECK(back.mse == r.mse);
    CHECK(std::isinf(*back.psnr));
    CHECK(*back.ssim == 0.875);
    CHECK(back.n_samples == 64);

    EvalReport dotr;
    dotr.mae = 1.5;
    dotr.mse = 2.0;
    dotr.n_samples = 8;
    EvalReport dotback = EvalReport::from_json(dotr.to_json());
    CHECK_FALSE(dotback.psnr.has_value());
    CHECK_FALSE(dotback.ssim.has_value());
    CHECK(dotr.csv_row() == "1.5,2,,,8");
}
