#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mds/datagen.hpp"
#include "mds/errors.hpp"
#include "mds/trainer.hpp"

using namespace mds;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

// 16x16 scenes keep these runs fast
std::string tiny_dataset(const std::string& tag, int n_train = 8, int n_test = 4) {
    const std::string dir = "/tmp/mds_trainer_" + tag;
    fs::remove_all(dir);
    SceneConfig cfg;
    cfg.size = 16;
    cfg.count_min = 1;
    cfg.count_max = 4;
    cfg.blob_radius_min = 1.0;
    cfg.blob_radius_max = 2.0;
    cfg.seed = 5;
    write_dataset(dir, cfg, n_train, n_test);
    return dir;
}

RunConfig tiny_config(const std::string& data, const std::string& out) {
    RunConfig cfg;
    cfg.arch.base_channels = 4;
    cfg.epochs_sn = 2;
    cfg.epochs_dme = 2;
    cfg.batch = 4;
    cfg.seed = 17;
    cfg.sigma = 2.0;
    cfg.data_dir = data;
    cfg.out_dir = out;
    return cfg;
}

}  // namespace

TEST_CASE("train_sn smoke: checkpoint, loss log, manifest, determinism") {
    std::string data = tiny_dataset("sn");
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_sn_a");
    fs::remove_all(cfg.out_dir);
    TrainResult r = train_sn(cfg);
    CHECK(fs::exists(r.checkpoint_path));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "losses.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "run_manifest.json"));
    CHECK(r.epoch_losses.size() == 2);

    RunConfig cfg2 = cfg;
    cfg2.out_dir = "/tmp/mds_run_sn_b";
    fs::remove_all(cfg2.out_dir);
    TrainResult r2 = train_sn(cfg2);
    CHECK(slurp((fs::path(cfg.out_dir) / "losses.csv").string()) ==
          slurp((fs::path(cfg2.out_dir) / "losses.csv").string()));
    CHECK(slurp(r.checkpoint_path) == slurp(r2.checkpoint_path));
}

TEST_CASE("train_sn reduces the reconstruction loss on a small run") {
    std::string data = tiny_dataset("snprog", 16, 2);
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_snprog");
    fs::remove_all(cfg.out_dir);
    cfg.epochs_sn = 6;
    TrainResult r = train_sn(cfg);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
}

TEST_CASE("train_dme: baseline config never builds L_F; supervision starts positive") {
    std::string data = tiny_dataset("dme");
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_dme_sn");
    fs::remove_all(cfg.out_dir);
    TrainResult sn = train_sn(cfg);

    RunConfig base = cfg;
    base.out_dir = "/tmp/mds_run_dme_m0";
    base.supervised_nodes = 0;
    fs::remove_all(base.out_dir);
    train_dme(base, sn.checkpoint_path);
    {
        std::ifstream is(fs::path(base.out_dir) / "losses.csv");
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            auto first = line.find(',');
            auto second = line.find(',', first + 1);
            auto third = line.find(',', second + 1);
            std::string l_f = line.substr(second + 1, third - second - 1);
            CHECK(l_f == "0");
        }
    }

    RunConfig mds3 = cfg;
    mds3.out_dir = "/tmp/mds_run_dme_m3";
    mds3.supervised_nodes = 3;
    fs::remove_all(mds3.out_dir);
    train_dme(mds3, sn.checkpoint_path);
    {
        std::ifstream is(fs::path(mds3.out_dir) / "losses.csv");
        std::string line;
        std::getline(is, line);
        REQUIRE(std::getline(is, line));  // first step
        auto first = line.find(',');
        auto second = line.find(',', first + 1);
        auto third = line.find(',', second + 1);
        double l_f = std::stod(line.substr(second + 1, third - second - 1));
        CHECK(l_f > 0.0);
    }
}

TEST_CASE("train_dme rejects incompatible checkpoints") {
    std::string data = tiny_dataset("mismatch");
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_mismatch_sn");
    fs::remove_all(cfg.out_dir);
    TrainResult sn = train_sn(cfg);
    RunConfig other = cfg;
    other.arch.base_channels = 8;  // different widths
    other.out_dir = "/tmp/mds_run_mismatch_dme";
    fs::remove_all(other.out_dir);
    CHECK_THROWS_AS(train_dme(other, sn.checkpoint_path), ConfigError);
}

TEST_CASE("evaluate: perfect and constant-zero predictors") {
    std::string data = tiny_dataset("eval");
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_eval");
    double sigma = cfg.sigma;

    Predictor perfect = [sigma](const Sample& s) {
        return gaussian_density_map(s.annotation, sigma).values;
    };
    EvalReport r = evaluate_with_predictor(perfect, cfg, "test");
    CHECK(r.mae == doctest::Approx(0.0));
    CHECK(r.mse == doctest::Approx(0.0));
    REQUIRE(r.ssim.has_value());
    CHECK(*r.ssim == doctest::Approx(1.0));
    REQUIRE(r.psnr.has_value());
    CHECK(std::isinf(*r.psnr));

    Predictor zero = [](const Sample& s) {
        return Tensor({s.annotation.height, s.annotation.width});
    };
    EvalReport rz = evaluate_with_predictor(zero, cfg, "test");
    DatasetManifest m = read_manifest(data);
    double mean_count = 0.0;
    for (const auto& id : m.test_ids) {
        mean_count += load_sample(data, id).annotation.count();
    }
    mean_count /= static_cast<double>(m.test_ids.size());
    CHECK(rz.mae == doctest::Approx(mean_count));

    CHECK_THROWS_AS(evaluate_with_predictor(zero, cfg, "bogus"), UsageError);
}

TEST_CASE("evaluate_model on a trained checkpoint writes reports") {
    std::string data = tiny_dataset("evalmodel");
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_evalmodel_sn");
    fs::remove_all(cfg.out_dir);
    TrainResult sn = train_sn(cfg);
    RunConfig dme_cfg = cfg;
    dme_cfg.out_dir = "/tmp/mds_run_evalmodel_dme";
    fs::remove_all(dme_cfg.out_dir);
    TrainResult dme = train_dme(dme_cfg, sn.checkpoint_path);

    EvalReport r = evaluate_model(dme.checkpoint_path, dme_cfg, "test", dme_cfg.out_dir);
    CHECK(r.n_samples == 4);
    CHECK(fs::exists(fs::path(dme_cfg.out_dir) / "eval.json"));
    CHECK(fs::exists(fs::path(dme_cfg.out_dir) / "eval.csv"));
    EvalReport back = EvalReport::from_json(slurp((fs::path(dme_cfg.out_dir) / "eval.json").string()));
    CHECK(back.mae == r.mae);

    // two identical end-to-end runs produce byte-identical artifacts
    RunConfig rerun = dme_cfg;
    rerun.out_dir = "/tmp/mds_run_evalmodel_dme2";
    fs::remove_all(rerun.out_dir);
    TrainResult dme2 = train_dme(rerun, sn.checkpoint_path);
    CHECK(slurp(dme.checkpoint_path) == slurp(dme2.checkpoint_path));
}

TEST_CASE("dot regime: training runs and probabilities stay in (0,1)") {
    std::string data = tiny_dataset("dot");
    RunConfig cfg = tiny_config(data, "/tmp/mds_run_dot_sn");
    cfg.loss.regime = HeadMode::dot;
    cfg.arch.head_mode = HeadMode::dot;
    fs::remove_all(cfg.out_dir);
    TrainResult sn = train_sn(cfg);
    RunConfig dme_cfg = cfg;
    dme_cfg.out_dir = "/tmp/mds_run_dot_dme";
    fs::remove_all(dme_cfg.out_dir);
    TrainResult dme = train_dme(dme_cfg, sn.checkpoint_path);

    Rng rng(dme_cfg.seed ^ 0xd3e0d3e0ull);
    ParamSet params = make_dme_params(dme_cfg.arch, rng);
    params.load_values_from(ParamSet::load(dme.checkpoint_path));
    DatasetManifest m = read_manifest(data);
    Sample s = load_sample(data, m.test_ids[0]);
    Graph g;
    DmeOut out = dme_forward(
        g, g.leaf(Tensor::from({1, 1, 16, 16}, s.image.data)), params, dme_cfg.arch);
    for (double v : Graph::value(out.output).data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    EvalReport r = evaluate_model(dme.checkpoint_path, dme_cfg, "test");
    CHECK_FALSE(r.psnr.has_value());  // map metrics are density-regime only
}

TEST_CASE("run config JSON round trip") {
    RunConfig cfg;
    cfg.loss.alpha = 0.075;
    cfg.loss.mode = BetaMode::decrease;
    cfg.supervised_nodes = 1;
    cfg.equal_weight_loss = true;
    cfg.sigma = 7.5;
    cfg.seed = 1234;
    RunConfig back = RunConfig::from_json(cfg.to_json());
    CHECK(back.loss.alpha == 0.075);
    CHECK(back.loss.mode == BetaMode::decrease);
    CHECK(back.supervised_nodes == 1);
    CHECK(back.equal_weight_loss);
    CHECK(back.sigma == 7.5);
    CHECK(back.seed == 1234);
}
