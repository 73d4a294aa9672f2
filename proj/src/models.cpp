#include "mds/models.hpp"

#include "mds/errors.hpp"

namespace mds {

const char* head_mode_name(HeadMode m) {
    return m == HeadMode::density ? "density" : "dot";
}

HeadMode head_mode_from_name(const std::string& name) {
    if (name == "density") {
        return HeadMode::density;
    }
    if (name == "dot") {
        return HeadMode::dot;
    }
    throw UsageError("unknown head mode: " + name);
}

void ArchConfig::validate() const {
    if (in_channels < 1 || base_channels < 1) {
        throw ConfigError("channel counts must be positive");
    }
    if (encoder_depth < 1 || num_nodes != encoder_depth) {
        throw ConfigError("num_nodes must equal encoder_depth (full-resolution decoder)");
    }
    if (se_reduction < 1) {
        throw ConfigError("se_reduction must be >= 1");
    }
}

int ArchConfig::tap_channels(int node) const {
    if (node < 1 || node > num_nodes) {
        throw UsageError("tap node out of range");
    }
    return base_channels * (1 << (num_nodes - node));
}

void ArchConfig::check_input_size(int h, int w) const {
    int f = 1 << encoder_depth;
    if (h % f != 0 || w % f != 0) {
        throw ConfigError("input spatial size must be divisible by " + std::to_string(f));
    }
}

SeOut se_block_forward(Graph& g, const Var& features, const Var& w1, const Var& b1,
                       const Var& w2, const Var& b2) {
    Var squeezed = g.global_avg_pool(features);
    Var hidden = g.relu(g.linear(squeezed, w1, b1));
    Var weights = g.sigmoid(g.linear(hidden, w2, b2));
    return {g.channel_scale(features, weights), weights};
}

// ---- parameter construction -------------------------------------------------

// Conv biases start at a small positive value so no pixel's feature vector
// is exactly zero after ReLU at init (exact ties sit on the ReLU kink and
// are invisible to finite differences).
constexpr double kConvBiasInit = 0.01;

static void add_conv(ParamSet& ps, const std::string& name, int out_ch, int in_ch, int k,
                     Rng& rng) {
    ps.add(name + ".w", init_weight({out_ch, in_ch, k, k}, in_ch * k * k, rng));
    Tensor b({out_ch}, kConvBiasInit);
    b.requires_grad = true;
    ps.add(name + ".b", std::move(b));
}

static void add_deconv(ParamSet& ps, const std::string& name, int in_ch, int out_ch, int k,
                       Rng& rng) {
    ps.add(name + ".w", init_weight({in_ch, out_ch, k, k}, in_ch * k * k, rng));
    Tensor b({out_ch}, kConvBiasInit);
    b.requires_grad = true;
    ps.add(name + ".b", std::move(b));
}

static void add_linear(ParamSet& ps, const std::string& name, int in_dim, int out_dim, Rng& rng) {
    ps.add(name + ".w", init_weight({in_dim, out_dim}, in_dim, rng));
    Tensor b({out_dim});
    b.requires_grad = true;
    ps.add(name + ".b", std::move(b));
}

static int se_hidden(const ArchConfig& cfg, int channels) {
    return std::max(1, channels / cfg.se_reduction);
}

static void add_branch(ParamSet& ps, const std::string& prefix, int in_ch, int b, Rng& rng) {
    add_conv(ps, prefix + ".conv1", b, in_ch, 3, rng);
    add_conv(ps, prefix + ".conv2", 2 * b, b, 3, rng);
    add_conv(ps, prefix + ".conv3", 4 * b, 2 * b, 3, rng);
    add_conv(ps, prefix + ".conv4", 4 * b, 4 * b, 3, rng);
}

ParamSet make_sn_params(const ArchConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamSet ps;
    const int b = cfg.base_channels;
    add_branch(ps, "sn.gt", 1, b, rng);
    add_branch(ps, "sn.img", cfg.in_channels, b, rng);
    add_conv(ps, "sn.merge", cfg.bottleneck_channels(), 8 * b, 1, rng);
    int ch = cfg.bottleneck_channels();
    for (int n = 1; n <= cfg.num_nodes; ++n) {
        int out = cfg.tap_channels(n);
        const std::string stage = "sn.dec" + std::to_string(n);
        add_deconv(ps, stage + ".deconv", ch, out, 4, rng);
        add_conv(ps, stage + ".conv", out, out, 3, rng);
        add_linear(ps, stage + ".se.fc1", out, se_hidden(cfg, out), rng);
        add_linear(ps, stage + ".se.fc2", se_hidden(cfg, out), out, rng);
        ch = out;
    }
    add_conv(ps, "sn.head", 1, ch, 1, rng);
    return ps;
}

ParamSet make_dme_params(const ArchConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamSet ps;
    const int b = cfg.base_channels;
    int ch = cfg.in_channels;
    for (int i = 1; i <= cfg.encoder_depth; ++i) {
        int out = b * (1 << i);
        const std::string block = "dme.enc" + std::to_string(i);
        add_conv(ps, block + ".conv_a", out, ch, 3, rng);
        add_conv(ps, block + ".conv_b", out, out, 3, rng);
        ch = out;
    }
    for (int n = 1; n <= cfg.num_nodes; ++n) {
        int out = cfg.tap_channels(n);
        const std::string set = "dme.dec" + std::to_string(n);
        add_conv(ps, set + ".conv", ch, ch, 3, rng);
        add_deconv(ps, set + ".deconv", ch, out, 4, rng);
        ch = out;
    }
    add_conv(ps, "dme.head1", ch, ch, 3, rng);
    add_conv(ps, "dme.head2", 1, ch, 1, rng);
    return ps;
}

// ---- forward passes ---------------------------------------------------------

static Var conv_relu(Graph& g, const Var& x, ParamSet& p, const std::string& name, int stride,
                     int pad) {
    return g.relu(
        g.conv2d(x, g.param(p.at(name + ".w")), g.param(p.at(name + ".b")), stride, pad));
}

static Var deconv_relu(Graph& g, const Var& x, ParamSet& p, const std::string& name) {
    // kernel 4, stride 2, pad 1: exact x2 upsampling
    return g.relu(
        g.conv2d_transpose(x, g.param(p.at(name + ".w")), g.param(p.at(name + ".b")), 2, 1));
}

static Var branch_forward(Graph& g, const Var& x, ParamSet& p, const std::string& prefix) {
    Var h = conv_relu(g, x, p, prefix + ".conv1", 1, 1);
    h = conv_relu(g, h, p, prefix + ".conv2", 2, 1);
    h = conv_relu(g, h, p, prefix + ".conv3", 2, 1);
    h = conv_relu(g, h, p, prefix + ".conv4", 2, 1);
    return h;
}

SnOut sn_forward(Graph& g, const Var& gt_input, const Var& image, ParamSet& params,
                 const ArchConfig& cfg) {
    cfg.validate();
    const Tensor& gv = Graph::value(gt_input);
    const Tensor& iv = Graph::value(image);
    if (gv.ndim() != 4 || gv.dim(1) != 1) {
        throw ConfigError("sn_forward: gt input must be [N,1,H,W]");
    }
    if (iv.ndim() != 4 || iv.dim(1) != cfg.in_channels) {
        throw ConfigError("sn_forward: image channels do not match config");
    }
    if (gv.dim(2) != iv.dim(2) || gv.dim(3) != iv.dim(3) || gv.dim(0) != iv.dim(0)) {
        throw ConfigError("sn_forward: gt and image sizes must match");
    }
    cfg.check_input_size(gv.dim(2), gv.dim(3));

    Var gt_feat = branch_forward(g, gt_input, params, "sn.gt");
    Var img_feat = branch_forward(g, image, params, "sn.img");
    Var h = g.concat_channels(gt_feat, img_feat);
    h = conv_relu(g, h, params, "sn.merge", 1, 0);

    SnOut out;
    for (int n = 1; n <= cfg.num_nodes; ++n) {
        const std::string stage = "sn.dec" + std::to_string(n);
        h = deconv_relu(g, h, params, stage + ".deconv");
        h = conv_relu(g, h, params, stage + ".conv", 1, 1);
        SeOut se = se_block_forward(g, h, g.param(params.at(stage + ".se.fc1.w")),
                                    g.param(params.at(stage + ".se.fc1.b")),
                                    g.param(params.at(stage + ".se.fc2.w")),
                                    g.param(params.at(stage + ".se.fc2.b")));
        h = se.scaled;
        out.features.push_back(se.scaled);
        out.weights.push_back(se.weights);
    }
    out.recon = g.relu(
        g.conv2d(h, g.param(params.at("sn.head.w")), g.param(params.at("sn.head.b")), 1, 0));
    return out;
}

DmeOut dme_forward(Graph& g, const Var& image, ParamSet& params, const ArchConfig& cfg) {
    cfg.validate();
    const Tensor& iv = Graph::value(image);
    if (iv.ndim() != 4 || iv.dim(1) != cfg.in_channels) {
        throw ConfigError("dme_forward: image must be [N,in_channels,H,W]");
    }
    cfg.check_input_size(iv.dim(2), iv.dim(3));

    Var h = image;
    for (int i = 1; i <= cfg.encoder_depth; ++i) {
        const std::string block = "dme.enc" + std::to_string(i);
        h = conv_relu(g, h, params, block + ".conv_a", 1, 1);
        h = conv_relu(g, h, params, block + ".conv_b", 2, 1);
    }
    DmeOut out;
    for (int n = 1; n <= cfg.num_nodes; ++n) {
        const std::string set = "dme.dec" + std::to_string(n);
        h = conv_relu(g, h, params, set + ".conv", 1, 1);
        h = deconv_relu(g, h, params, set + ".deconv");
        out.taps.push_back(h);
    }
    h = conv_relu(g, h, params, "dme.head1", 1, 1);
    Var pre = g.conv2d(h, g.param(params.at("dme.head2.w")), g.param(params.at("dme.head2.b")),
                       1, 0);
    out.output = cfg.head_mode == HeadMode::density ? g.relu(pre) : g.sigmoid(pre);
    return out;
}

SupervisionBundle run_sn_bundle(ParamSet& sn_params, const ArchConfig& cfg,
                                const Tensor& gt_input, const Tensor& image,
                                Tensor* recon_out) {
    Graph g;
    SnOut sn = sn_forward(g, g.leaf(gt_input), g.leaf(image), sn_params, cfg);
    SupervisionBundle bundle;
    for (int n = 0; n < cfg.num_nodes; ++n) {
        bundle.features.push_back(Graph::value(sn.features[static_cast<std::size_t>(n)]));
        bundle.weights.push_back(Graph::value(sn.weights[static_cast<std::size_t>(n)]));
    }
    if (recon_out != nullptr) {
        *recon_out = Graph::value(sn.recon);
    }
    return bundle;
}

}  // namespace mds
