#include "mds/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mds/errors.hpp"
#include "mds/nt1.hpp"
#include "mds/optimizer.hpp"

namespace mds {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
    loss.validate();
    arch.validate();
    if (lr <= 0.0) {
        throw ConfigError("lr must be positive");
    }
    if (epochs_sn < 1 || epochs_dme < 1 || batch < 1) {
        throw ConfigError("epochs and batch must be >= 1");
    }
    if (supervised_nodes < 0 || supervised_nodes > arch.num_nodes) {
        throw ConfigError("supervised_nodes must lie in 0..num_nodes");
    }
    if (adaptive && (adaptive_beta <= 0.0 || adaptive_k < 1)) {
        throw ConfigError("adaptive kernel needs beta > 0 and k >= 1");
    }
}

std::string RunConfig::to_json() const {
    json j;
    j["alpha"] = loss.alpha;
    j["beta_mode"] = beta_mode_name(loss.mode);
    j["num_nodes"] = loss.num_nodes;
    j["regime"] = head_mode_name(loss.regime);
    j["ce_clamp"] = loss.ce_clamp;
    j["in_channels"] = arch.in_channels;
    j["base_channels"] = arch.base_channels;
    j["encoder_depth"] = arch.encoder_depth;
    j["se_reduction"] = arch.se_reduction;
    j["lr"] = lr;
    j["epochs_sn"] = epochs_sn;
    j["epochs_dme"] = epochs_dme;
    j["batch"] = batch;
    j["seed"] = seed;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    j["supervised_nodes"] = supervised_nodes;
    j["equal_weight_loss"] = equal_weight_loss;
    j["sigma"] = sigma;
    j["adaptive"] = adaptive;
    j["adaptive_beta"] = adaptive_beta;
    j["adaptive_k"] = adaptive_k;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    auto get = [&j](const char* key, auto fallback) {
        using T = decltype(fallback);
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    };
    c.loss.alpha = get("alpha", c.loss.alpha);
    c.loss.mode = beta_mode_from_name(get("beta_mode", std::string(beta_mode_name(c.loss.mode))));
    c.loss.num_nodes = get("num_nodes", c.loss.num_nodes);
    c.loss.regime = head_mode_from_name(get("regime", std::string(head_mode_name(c.loss.regime))));
    c.loss.ce_clamp = get("ce_clamp", c.loss.ce_clamp);
    c.arch.in_channels = get("in_channels", c.arch.in_channels);
    c.arch.base_channels = get("base_channels", c.arch.base_channels);
    c.arch.encoder_depth = get("encoder_depth", c.arch.encoder_depth);
    c.arch.se_reduction = get("se_reduction", c.arch.se_reduction);
    c.arch.num_nodes = c.loss.num_nodes;
    c.arch.head_mode = c.loss.regime;
    c.lr = get("lr", c.lr);
    c.epochs_sn = get("epochs_sn", c.epochs_sn);
    c.epochs_dme = get("epochs_dme", c.epochs_dme);
    c.batch = get("batch", c.batch);
    c.seed = get("seed", c.seed);
    c.data_dir = get("data_dir", c.data_dir);
    c.out_dir = get("out_dir", c.out_dir);
    c.supervised_nodes = get("supervised_nodes", c.supervised_nodes);
    c.equal_weight_loss = get("equal_weight_loss", c.equal_weight_loss);
    c.sigma = get("sigma", c.sigma);
    c.adaptive = get("adaptive", c.adaptive);
    c.adaptive_beta = get("adaptive_beta", c.adaptive_beta);
    c.adaptive_k = get("adaptive_k", c.adaptive_k);
    return c;
}

std::uint64_t fnv1a_file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open for hashing: " + path);
    }
    std::uint64_t h = 0xcbf29ce484222325ull;
    char c;
    while (is.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

static std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- dataset loading --------------------------------------------------------

namespace {

struct LoadedSet {
    std::vector<Sample> samples;
    std::vector<Tensor> density;  // [H,W] per sample
    std::vector<Tensor> dots;     // [H,W], dot regime only
    int height = 0;
    int width = 0;
};

LoadedSet load_split(const RunConfig& cfg, const std::vector<std::string>& ids,
                     const DatasetManifest& manifest) {
    LoadedSet set;
    double sigma = cfg.sigma > 0.0 ? cfg.sigma : default_sigma(manifest.config.profile);
    for (const auto& id : ids) {
        Sample s = load_sample(cfg.data_dir, id);
        DensityMap dm = cfg.adaptive
                            ? adaptive_density_map(s.annotation, cfg.adaptive_beta,
                                                   cfg.adaptive_k, sigma)
                            : gaussian_density_map(s.annotation, sigma);
        set.height = s.image.dim(1);
        set.width = s.image.dim(2);
        set.density.push_back(std::move(dm.values));
        if (cfg.loss.regime == HeadMode::dot) {
            set.dots.push_back(dot_target_map(s.annotation).values);
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

// Stacks [H,W] maps (or [1,H,W] images) for the given indices into [B,1,H,W].
Tensor stack_batch(const std::vector<Tensor>& maps, const std::vector<int>& order,
                   std::size_t begin, std::size_t end) {
    const Tensor& first = maps[static_cast<std::size_t>(order[begin])];
    int h = first.dim(first.ndim() - 2);
    int w = first.dim(first.ndim() - 1);
    int b = static_cast<int>(end - begin);
    Tensor out({b, 1, h, w});
    for (std::size_t i = begin; i < end; ++i) {
        const Tensor& m = maps[static_cast<std::size_t>(order[i])];
        std::copy(m.data.begin(), m.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>((i - begin) * m.data.size()));
    }
    return out;
}

Tensor stack_images(const std::vector<Sample>& samples, const std::vector<int>& order,
                    std::size_t begin, std::size_t end) {
    const Tensor& first = samples[static_cast<std::size_t>(order[begin])].image;
    int h = first.dim(1), w = first.dim(2);
    int b = static_cast<int>(end - begin);
    Tensor out({b, first.dim(0), h, w});
    for (std::size_t i = begin; i < end; ++i) {
        const Tensor& m = samples[static_cast<std::size_t>(order[i])].image;
        std::copy(m.data.begin(), m.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>((i - begin) * m.data.size()));
    }
    return out;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)));
        std::swap(idx[i - 1], idx[j]);
    }
}

void write_manifest(const RunConfig& cfg, const std::string& stage, const json& extra) {
    fs::create_directories(cfg.out_dir);
    fs::path path = fs::path(cfg.out_dir) / "run_manifest.json";
    json root;
    if (fs::exists(path)) {
        std::ifstream is(path);
        try {
            root = json::parse(is);
        } catch (...) {
            root = json::object();
        }
    }
    json entry;
    entry["config"] = json::parse(cfg.to_json());
    entry["dataset_hash"] =
        hash_hex(fnv1a_file_hash((fs::path(cfg.data_dir) / "manifest.json").string()));
    entry["timestamp_unix"] = static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        entry[it.key()] = it.value();
    }
    root[stage] = entry;
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot write manifest: " + path.string());
    }
    os << root.dump(2) << "\n";
}

struct LossLog {
    std::ofstream os;
    explicit LossLog(const std::string& dir) {
        fs::create_directories(dir);
        os.open(fs::path(dir) / "losses.csv");
        if (!os) {
            throw DataError("cannot write losses.csv in " + dir);
        }
        os << "step,l_main,l_f,total\n";
    }
    void row(std::int64_t step, double l_main, double l_f, double total) {
        os << step << "," << format_full(l_main) << "," << format_full(l_f) << ","
           << format_full(total) << "\n";
    }
};

}  // namespace

// ---- stage 1: SupervisionNet ------------------------------------------------

TrainResult train_sn(const RunConfig& cfg) {
    cfg.validate();
    write_manifest(cfg, "train_sn", {{"status", "running"}});
    DatasetManifest manifest = read_manifest(cfg.data_dir);
    LoadedSet train = load_split(cfg, manifest.train_ids, manifest);
    if (train.samples.empty()) {
        throw DataError("training split is empty");
    }

    Rng init_rng(cfg.seed);
    ParamSet params = make_sn_params(cfg.arch, init_rng);
    AdamState adam;
    Rng shuffle_rng(cfg.seed ^ 0x5eedf00dull);
    LossLog log(cfg.out_dir);

    const std::vector<Tensor>& gt_inputs =
        cfg.loss.regime == HeadMode::dot ? train.dots : train.density;

    TrainResult result;
    std::vector<int> order(train.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    std::int64_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs_sn; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double epoch_sum = 0.0;
        std::int64_t epoch_batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            std::size_t end = std::min(order.size(), begin + cfg.batch);
            Graph g;
            Var gt_in = g.leaf(stack_batch(gt_inputs, order, begin, end));
            Var image = g.leaf(stack_images(train.samples, order, begin, end));
            Var target = g.leaf(stack_batch(train.density, order, begin, end));
            SnOut sn = sn_forward(g, gt_in, image, params, cfg.arch);
            Var loss = loss_groundtruth(g, sn.recon, target);
            double value = Graph::scalar(loss);
            if (!std::isfinite(value)) {
                throw NumericError("train_sn: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch starting at sample " +
                                   std::to_string(order[begin]));
            }
            params.zero_grads();
            g.backward(loss);
            adam_step(params, adam, cfg.lr);
            step += 1;
            log.row(step, value, 0.0, value);
            epoch_sum += value;
            epoch_batches += 1;
        }
        result.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_batches));
    }

    fs::create_directories(cfg.out_dir);
    result.checkpoint_path = (fs::path(cfg.out_dir) / "sn.ckpt").string();
    params.save(result.checkpoint_path);
    write_manifest(cfg, "train_sn",
                   {{"status", "complete"},
                    {"checkpoint", result.checkpoint_path},
                    {"epoch_losses", result.epoch_losses}});
    return result;
}

// ---- stage 2: DME under MDS -------------------------------------------------

static std::uint64_t param_value_hash(const ParamSet& ps) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        for (double v : ps.tensor(i).data) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

TrainResult train_dme(const RunConfig& cfg, const std::string& sn_checkpoint) {
    cfg.validate();
    write_manifest(cfg, "train_dme", {{"status", "running"}});
    DatasetManifest manifest = read_manifest(cfg.data_dir);
    LoadedSet train = load_split(cfg, manifest.train_ids, manifest);
    if (train.samples.empty()) {
        throw DataError("training split is empty");
    }

    // Rebuild the SN skeleton so names/shapes are validated, then freeze it.
    Rng sn_rng(cfg.seed);
    ParamSet sn_params = make_sn_params(cfg.arch, sn_rng);
    sn_params.load_values_from(ParamSet::load(sn_checkpoint));
    sn_params.set_requires_grad(false);
    const std::uint64_t sn_hash_before = param_value_hash(sn_params);

    Rng init_rng(cfg.seed ^ 0xd3e0d3e0ull);
    ParamSet params = make_dme_params(cfg.arch, init_rng);
    AdamState adam;
    Rng shuffle_rng(cfg.seed ^ 0x5eedf00dull);
    LossLog log(cfg.out_dir);

    const int supervised = cfg.supervised_nodes;
    const int first_node = cfg.arch.num_nodes - supervised;  // 0-based index of first kept node
    NodeWeights full = beta_schedule(cfg.loss.mode, cfg.loss.num_nodes);
    NodeWeights kept;
    kept.beta.assign(full.beta.begin() + first_node, full.beta.end());

    const std::vector<Tensor>& gt_inputs =
        cfg.loss.regime == HeadMode::dot ? train.dots : train.density;

    TrainResult result;
    std::vector<int> order(train.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    std::int64_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs_dme; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double epoch_sum = 0.0;
        std::int64_t epoch_batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            std::size_t end = std::min(order.size(), begin + cfg.batch);
            Graph g;
            Var image = g.leaf(stack_images(train.samples, order, begin, end));
            DmeOut dme = dme_forward(g, image, params, cfg.arch);

            Var l_main;
            if (cfg.loss.regime == HeadMode::dot) {
                Var dot_target = g.leaf(stack_batch(train.dots, order, begin, end));
                l_main = loss_dot(g, dme.output, dot_target, cfg.loss.ce_clamp);
            } else {
                Var target = g.leaf(stack_batch(train.density, order, begin, end));
                l_main = loss_groundtruth(g, dme.output, target);
            }

            Var total = l_main;
            double l_f_value = 0.0;
            if (supervised > 0) {
                // SN runs inside the same graph as frozen constants.
                Var gt_in = g.leaf(stack_batch(gt_inputs, order, begin, end));
                SnOut sn = sn_forward(g, gt_in, image, sn_params, cfg.arch);
                std::vector<Var> taps(dme.taps.begin() + first_node, dme.taps.end());
                std::vector<Var> feats(sn.features.begin() + first_node, sn.features.end());
                Var l_f;
                if (cfg.equal_weight_loss) {
                    l_f = loss_features_ew(g, taps, feats, kept);
                } else {
                    std::vector<Var> weights(sn.weights.begin() + first_node, sn.weights.end());
                    l_f = loss_features(g, taps, feats, weights, kept);
                }
                l_f_value = Graph::scalar(l_f);
                total = combined_loss(g, l_main, l_f, cfg.loss.alpha);
            }

            double main_value = Graph::scalar(l_main);
            double total_value = Graph::scalar(total);
            if (!std::isfinite(total_value)) {
                throw NumericError("train_dme: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch starting at sample " +
                                   std::to_string(order[begin]));
            }
            params.zero_grads();
            g.backward(total);
            adam_step(params, adam, cfg.lr);
            step += 1;
            log.row(step, main_value, l_f_value, total_value);
            epoch_sum += total_value;
            epoch_batches += 1;
        }
        result.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_batches));
    }

    if (param_value_hash(sn_params) != sn_hash_before) {
        throw NumericError("train_dme: frozen SN parameters changed");
    }
    for (std::size_t i = 0; i < sn_params.size(); ++i) {
        if (!sn_params.tensor(i).grad.empty()) {
            throw NumericError("train_dme: frozen SN received gradients");
        }
    }

    fs::create_directories(cfg.out_dir);
    result.checkpoint_path = (fs::path(cfg.out_dir) / "dme.ckpt").string();
    params.save(result.checkpoint_path);
    write_manifest(cfg, "train_dme",
                   {{"status", "complete"},
                    {"checkpoint", result.checkpoint_path},
                    {"sn_checkpoint", sn_checkpoint},
                    {"epoch_losses", result.epoch_losses}});
    return result;
}

// ---- evaluation --------------------------------------------------------------

EvalReport evaluate_with_predictor(const Predictor& predict, const RunConfig& cfg,
                                   const std::string& split, const std::string& report_dir) {
    cfg.validate();
    DatasetManifest manifest = read_manifest(cfg.data_dir);
    if (split != "train" && split != "test") {
        throw UsageError("evaluate: split must be 'train' or 'test'");
    }
    const std::vector<std::string>& ids =
        split == "train" ? manifest.train_ids : manifest.test_ids;
    if (ids.empty()) {
        throw UsageError("evaluate: split '" + split + "' is empty");
    }

    double sigma = cfg.sigma > 0.0 ? cfg.sigma : default_sigma(manifest.config.profile);
    std::vector<double> gt_counts, pred_counts;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int map_samples = 0;
    for (const auto& id : ids) {
        Sample s = load_sample(cfg.data_dir, id);
        Tensor out = predict(s);
        if (out.ndim() != 2) {
            throw UsageError("evaluate: predictor must return an [H,W] map");
        }
        gt_counts.push_back(static_cast<double>(s.annotation.count()));
        pred_counts.push_back(sum_of(out));
        if (cfg.loss.regime == HeadMode::density) {
            DensityMap gt = cfg.adaptive
                                ? adaptive_density_map(s.annotation, cfg.adaptive_beta,
                                                       cfg.adaptive_k, sigma)
                                : gaussian_density_map(s.annotation, sigma);
            if (max_of(gt.values) > 0.0) {
                DensityMap pred;
                pred.count = sum_of(out);
                pred.values = std::move(out);
                psnr_sum += psnr(pred, gt);
                ssim_sum += ssim(pred, gt);
                map_samples += 1;
            }
        }
    }

    EvalReport report;
    auto [mae, mse] = count_mae_mse(gt_counts, pred_counts);
    report.mae = mae;
    report.mse = mse;
    report.n_samples = static_cast<int>(ids.size());
    if (map_samples > 0) {
        report.psnr = psnr_sum / map_samples;
        report.ssim = ssim_sum / map_samples;
    }
    if (!report_dir.empty()) {
        fs::create_directories(report_dir);
        std::ofstream js(fs::path(report_dir) / "eval.json");
        js << report.to_json() << "\n";
        std::ofstream cs(fs::path(report_dir) / "eval.csv");
        cs << report.csv_header() << "\n" << report.csv_row() << "\n";
        if (!js || !cs) {
            throw DataError("cannot write evaluation report in " + report_dir);
        }
    }
    return report;
}

EvalReport evaluate_model(const std::string& dme_checkpoint, const RunConfig& cfg,
                          const std::string& split, const std::string& report_dir) {
    cfg.validate();
    Rng init_rng(cfg.seed ^ 0xd3e0d3e0ull);
    ParamSet params = make_dme_params(cfg.arch, init_rng);
    params.load_values_from(ParamSet::load(dme_checkpoint));
    params.set_requires_grad(false);

    auto predict = [&params, &cfg](const Sample& s) {
        Graph g;
        Var image = g.leaf(Tensor::from({1, s.image.dim(0), s.image.dim(1), s.image.dim(2)},
                                        s.image.data));
        DmeOut dme = dme_forward(g, image, params, cfg.arch);
        const Tensor& out = Graph::value(dme.output);
        return Tensor::from({out.dim(2), out.dim(3)}, out.data);
    };
    return evaluate_with_predictor(predict, cfg, split, report_dir);
}

// ---- gradient-check harness ---------------------------------------------------

static Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

GradCheckReport run_model_grad_check(const std::string& model, const ArchConfig& arch,
                                     double eps, double tol, std::uint64_t seed,
                                     int input_size) {
    Rng data_rng(seed ^ 0xda7aull);
    const int hw = input_size;

    if (model == "se") {
        const int channels = 8, batch = 2;
        ParamSet params;
        Rng init(seed);
        params.add("se.fc1.w", init_weight({channels, 2}, channels, init));
        Tensor b1({2});
        b1.requires_grad = true;
        params.add("se.fc1.b", std::move(b1));
        params.add("se.fc2.w", init_weight({2, channels}, 2, init));
        Tensor b2({channels});
        b2.requires_grad = true;
        params.add("se.fc2.b", std::move(b2));
        Tensor input = random_tensor({batch, channels, 6, 6}, data_rng, -1.0, 1.0);
        auto build = [&params, input](Graph& g) {
            SeOut se = se_block_forward(g, g.leaf(input), g.param(params.at("se.fc1.w")),
                                        g.param(params.at("se.fc1.b")),
                                        g.param(params.at("se.fc2.w")),
                                        g.param(params.at("se.fc2.b")));
            return g.scale(g.sum_all(g.mul(se.scaled, se.scaled)), 0.5);
        };
        return grad_check(build, params, eps, tol, seed);
    }

    Tensor image = random_tensor({1, arch.in_channels, hw, hw}, data_rng, 0.0, 1.0);
    Tensor density = random_tensor({1, 1, hw, hw}, data_rng, 0.0, 0.05);

    if (model == "sn") {
        Rng init(seed);
        ParamSet params = make_sn_params(arch, init);
        ArchConfig cfg = arch;
        auto build = [&params, cfg, image, density](Graph& g) {
            SnOut sn = sn_forward(g, g.leaf(density), g.leaf(image), params, cfg);
            return loss_groundtruth(g, sn.recon, g.leaf(density));
        };
        return grad_check(build, params, eps, tol, seed);
    }

    if (model == "dme") {
        Rng init(seed);
        ParamSet params = make_dme_params(arch, init);
        ArchConfig cfg = arch;
        auto build = [&params, cfg, image, density](Graph& g) {
            DmeOut dme = dme_forward(g, g.leaf(image), params, cfg);
            return loss_groundtruth(g, dme.output, g.leaf(density));
        };
        return grad_check(build, params, eps, tol, seed);
    }

    if (model == "objective") {
        Rng sn_init(seed);
        ParamSet sn_params = make_sn_params(arch, sn_init);
        sn_params.set_requires_grad(false);
        Rng dme_init(seed ^ 0xd3e0d3e0ull);
        ParamSet params = make_dme_params(arch, dme_init);
        ArchConfig cfg = arch;
        NodeWeights betas = beta_schedule(BetaMode::increase, cfg.num_nodes);
        auto build = [&params, &sn_params, cfg, betas, image, density](Graph& g) {
            DmeOut dme = dme_forward(g, g.leaf(image), params, cfg);
            SnOut sn = sn_forward(g, g.leaf(density), g.leaf(image), sn_params, cfg);
            Var l_g = loss_groundtruth(g, dme.output, g.leaf(density));
            Var l_f = loss_features(g, dme.taps, sn.features, sn.weights, betas);
            return combined_loss(g, l_g, l_f, 0.05);
        };
        return grad_check(build, params, eps, tol, seed);
    }

    throw UsageError("unknown grad-check model: " + model + " (se|sn|dme|objective)");
}

}  // namespace mds
