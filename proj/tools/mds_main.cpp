#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mds/datagen.hpp"
#include "mds/errors.hpp"
#include "mds/nt1.hpp"
#include "mds/pgm.hpp"
#include "mds/trainer.hpp"

namespace fs = std::filesystem;
using namespace mds;

namespace {

struct CommonFlags {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<std::string> beta_mode;
    std::optional<int> nodes;
    std::optional<std::string> regime;
    std::optional<double> sigma;
    bool adaptive = false;
    std::optional<double> lr;
    std::optional<int> epochs;
    std::optional<int> batch;
    std::optional<int> base_channels;
    bool equal_weight = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config_path, "JSON run config; flags override its values");
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--alpha", f.alpha, "feature-loss weight");
    sub->add_option("--beta-mode", f.beta_mode, "node weight mode")
        ->check(CLI::IsMember({"increase", "equal", "decrease"}));
    sub->add_option("--nodes", f.nodes, "supervised decoder nodes (0..3)")
        ->check(CLI::Range(0, 3));
    sub->add_option("--regime", f.regime, "supervision regime")
        ->check(CLI::IsMember({"density", "dot"}));
    sub->add_option("--sigma", f.sigma, "fixed Gaussian sigma (0 = profile default)");
    sub->add_flag("--adaptive", f.adaptive, "k-NN adaptive Gaussian kernels");
    sub->add_option("--lr", f.lr, "learning rate");
    sub->add_option("--epochs", f.epochs, "epochs for this stage");
    sub->add_option("--batch", f.batch, "batch size");
    sub->add_option("--base", f.base_channels, "base channel width");
    sub->add_flag("--ew", f.equal_weight, "equal-weight feature loss (ablation)");
}

RunConfig build_config(const CommonFlags& f, const std::string& data_dir,
                       const std::string& out_dir, bool epochs_are_sn) {
    RunConfig cfg;
    if (f.config_path) {
        std::ifstream is(*f.config_path);
        if (!is) {
            throw DataError("cannot open config: " + *f.config_path);
        }
        std::ostringstream buf;
        buf << is.rdbuf();
        cfg = RunConfig::from_json(buf.str());
    }
    if (!data_dir.empty()) {
        cfg.data_dir = data_dir;
    }
    if (!out_dir.empty()) {
        cfg.out_dir = out_dir;
    }
    if (f.seed) {
        cfg.seed = *f.seed;
    }
    if (f.alpha) {
        cfg.loss.alpha = *f.alpha;
    }
    if (f.beta_mode) {
        cfg.loss.mode = beta_mode_from_name(*f.beta_mode);
    }
    if (f.nodes) {
        cfg.supervised_nodes = *f.nodes;
    }
    if (f.regime) {
        cfg.loss.regime = head_mode_from_name(*f.regime);
        cfg.arch.head_mode = cfg.loss.regime;
    }
    if (f.sigma) {
        cfg.sigma = *f.sigma;
    }
    if (f.adaptive) {
        cfg.adaptive = true;
    }
    if (f.lr) {
        cfg.lr = *f.lr;
    }
    if (f.epochs) {
        (epochs_are_sn ? cfg.epochs_sn : cfg.epochs_dme) = *f.epochs;
    }
    if (f.batch) {
        cfg.batch = *f.batch;
    }
    if (f.base_channels) {
        cfg.arch.base_channels = *f.base_channels;
    }
    if (f.equal_weight) {
        cfg.equal_weight_loss = true;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MDSNet: multi-channel deep supervision for crowd density estimation"};
    app.require_subcommand(1);
    std::function<int()> action;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    {
        struct {
            std::string out;
            std::uint64_t seed = 1;
            int n = 64;
            int n_test = 0;
            std::string profile = "dense";
            int size = 64;
            int count_min = 5;
            int count_max = 20;
            double noise = 0.02;
            double blob_min = 2.0;
            double blob_max = 4.0;
            int augment_crop = 0;
        } static a;
        gen->add_option("--out", a.out, "dataset directory")->required();
        gen->add_option("--seed", a.seed, "dataset seed");
        gen->add_option("--n", a.n, "number of training samples");
        gen->add_option("--n-test", a.n_test, "number of test samples");
        gen->add_option("--profile", a.profile, "density profile")
            ->check(CLI::IsMember({"dense", "sparse"}));
        gen->add_option("--size", a.size, "square image side (divisible by 8)");
        gen->add_option("--count-min", a.count_min, "minimum crowd count");
        gen->add_option("--count-max", a.count_max, "maximum crowd count");
        gen->add_option("--noise", a.noise, "Gaussian pixel noise std");
        gen->add_option("--blob-min", a.blob_min, "minimum blob radius");
        gen->add_option("--blob-max", a.blob_max, "maximum blob radius");
        gen->add_option("--augment-crop", a.augment_crop,
                        "apply crop/flip/gamma augmentation to this size (0 = off)");
        gen->callback([&action]() {
            action = []() {
                SceneConfig cfg;
                cfg.size = a.size;
                cfg.count_min = a.count_min;
                cfg.count_max = a.count_max;
                cfg.blob_radius_min = a.blob_min;
                cfg.blob_radius_max = a.blob_max;
                cfg.noise_std = a.noise;
                cfg.seed = a.seed;
                cfg.profile = profile_from_name(a.profile);
                write_dataset(a.out, cfg, a.n, a.n_test, a.augment_crop);
                std::cout << "wrote " << a.n << "+" << a.n_test << " samples to " << a.out
                          << "\n";
                return 0;
            };
        });
    }

    // gen-gt
    auto* gt = app.add_subcommand("gen-gt", "export groundtruth maps as NT1");
    {
        struct {
            std::string data;
            std::string out;
            double sigma = 0.0;
            bool adaptive = false;
            double beta = 0.3;
            int k = 3;
            std::string regime = "density";
        } static a;
        gt->add_option("--data", a.data, "dataset directory")->required();
        gt->add_option("--out", a.out, "output directory")->required();
        gt->add_option("--sigma", a.sigma, "fixed sigma (0 = profile default)");
        gt->add_flag("--adaptive", a.adaptive, "k-NN adaptive kernels");
        gt->add_option("--beta", a.beta, "adaptive beta");
        gt->add_option("--k", a.k, "adaptive neighbour count");
        gt->add_option("--regime", a.regime, "map kind")
            ->check(CLI::IsMember({"density", "dot"}));
        gt->callback([&action]() {
            action = []() {
                DatasetManifest manifest = read_manifest(a.data);
                double sigma = a.sigma > 0.0 ? a.sigma : default_sigma(manifest.config.profile);
                fs::create_directories(a.out);
                std::vector<std::string> ids = manifest.train_ids;
                ids.insert(ids.end(), manifest.test_ids.begin(), manifest.test_ids.end());
                for (const auto& id : ids) {
                    Sample s = load_sample(a.data, id);
                    Tensor map;
                    if (a.regime == "dot") {
                        map = dot_target_map(s.annotation).values;
                    } else if (a.adaptive) {
                        map = adaptive_density_map(s.annotation, a.beta, a.k, sigma).values;
                    } else {
                        map = gaussian_density_map(s.annotation, sigma).values;
                    }
                    save_nt1((fs::path(a.out) / (id + ".nt1")).string(), map);
                }
                std::cout << "wrote " << ids.size() << " maps to " << a.out << "\n";
                return 0;
            };
        });
    }

    // train-sn
    auto* tsn = app.add_subcommand("train-sn", "pretrain the SupervisionNet");
    {
        static CommonFlags f;
        static std::string data, out;
        tsn->add_option("--data", data, "dataset directory")->required();
        tsn->add_option("--out", out, "run directory")->required();
        add_common(tsn, f);
        tsn->callback([&action]() {
            action = []() {
                RunConfig cfg = build_config(f, data, out, /*epochs_are_sn=*/true);
                TrainResult r = train_sn(cfg);
                std::cout << "sn checkpoint: " << r.checkpoint_path
                          << " (final epoch loss " << r.epoch_losses.back() << ")\n";
                return 0;
            };
        });
    }

    // train-dme
    auto* tdme = app.add_subcommand("train-dme", "train the density map estimator under MDS");
    {
        static CommonFlags f;
        static std::string data, out, sn_ckpt;
        tdme->add_option("--data", data, "dataset directory")->required();
        tdme->add_option("--out", out, "run directory")->required();
        tdme->add_option("--sn", sn_ckpt, "SupervisionNet checkpoint")->required();
        add_common(tdme, f);
        tdme->callback([&action]() {
            action = []() {
                RunConfig cfg = build_config(f, data, out, /*epochs_are_sn=*/false);
                TrainResult r = train_dme(cfg, sn_ckpt);
                std::cout << "dme checkpoint: " << r.checkpoint_path
                          << " (final epoch loss " << r.epoch_losses.back() << ")\n";
                return 0;
            };
        });
    }

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a DME checkpoint");
    {
        static CommonFlags f;
        static std::string data, out, ckpt, split;
        split = "test";
        ev->add_option("--data", data, "dataset directory")->required();
        ev->add_option("--ckpt", ckpt, "DME checkpoint")->required();
        ev->add_option("--split", split, "dataset split")
            ->check(CLI::IsMember({"train", "test"}));
        ev->add_option("--out", out, "directory for eval.json / eval.csv");
        add_common(ev, f);
        ev->callback([&action]() {
            action = []() {
                if (!fs::exists(ckpt)) {
                    throw DataError("checkpoint not found: " + ckpt);
                }
                RunConfig cfg = build_config(f, data, out.empty() ? "." : out, false);
                EvalReport report = evaluate_model(ckpt, cfg, split, out);
                std::cout << report.to_json() << "\n";
                return 0;
            };
        });
    }

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
    {
        struct {
            std::string model = "dme";
            double eps = 1e-5;
            double tol = 1e-4;
            std::uint64_t seed = 1;
            int size = 16;
        } static a;
        gc->add_option("--model", a.model, "component to check")
            ->check(CLI::IsMember({"se", "sn", "dme", "objective"}));
        gc->add_option("--eps", a.eps, "finite-difference step");
        gc->add_option("--tol", a.tol, "max relative error tolerance");
        gc->add_option("--seed", a.seed, "seed");
        gc->add_option("--size", a.size, "input spatial size");
        gc->callback([&action]() {
            action = []() {
                ArchConfig arch;
                GradCheckReport r =
                    run_model_grad_check(a.model, arch, a.eps, a.tol, a.seed, a.size);
                std::printf("model=%s max_rel_err=%.3e coords=%lld %s\n", a.model.c_str(),
                            r.max_rel_err, static_cast<long long>(r.coords_checked),
                            r.pass ? "PASS" : "FAIL");
                if (!r.pass) {
                    if (!r.message.empty()) {
                        std::cerr << r.message << "\n";
                    }
                    throw NumericError("gradient check failed (worst: " + r.worst_param + "[" +
                                       std::to_string(r.worst_index) + "])");
                }
                return 0;
            };
        });
    }

    // export-map
    auto* ex = app.add_subcommand("export-map", "write a max-normalized PGM next to an NT1 map");
    {
        static std::string in, out;
        ex->add_option("--in", in, "NT1 map")->required();
        ex->add_option("--out", out, "PGM path (default: alongside input)");
        ex->callback([&action]() {
            action = []() {
                Tensor t = load_nt1(in);
                if (t.ndim() != 2) {
                    throw DataError("export-map expects an [H,W] map: " + in);
                }
                std::string dst = out;
                if (dst.empty()) {
                    fs::path p(in);
                    p.replace_extension(".pgm");
                    dst = p.string();
                }
                save_pgm_normalized(dst, t);
                std::cout << "wrote " << dst << "\n";
                return 0;
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        return action();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
