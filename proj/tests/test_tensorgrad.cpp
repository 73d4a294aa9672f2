#include <doctest.h>

#include <cmath>

#include "mds/conv_kernels.hpp"
#include "mds/errors.hpp"
#include "mds/grad_check.hpp"
#include "mds/graph.hpp"
#include "mds/nt1.hpp"
#include "mds/optimizer.hpp"
#include "mds/params.hpp"
#include "mds/rng.hpp"

using namespace mds;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

// Oracle: direct six-loop cross-correlation, no im2col, no GEMM.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int F = w.dim(0), k = w.dim(2);
    int OH = (H + 2 * pad - k) / stride + 1;
    int OW = (W + 2 * pad - k) / stride + 1;
    Tensor y({N, F, OH, OW});
    for (int n = 0; n < N; ++n) {
        for (int f = 0; f < F; ++f) {
            for (int i = 0; i < OH; ++i) {
                for (int j = 0; j < OW; ++j) {
                    double acc = bias.data[static_cast<std::size_t>(f)];
                    for (int c = 0; c < C; ++c) {
                        for (int u = 0; u < k; ++u) {
                            for (int v = 0; v < k; ++v) {
                                int a = i * stride - pad + u;
                                int b = j * stride - pad + v;
                                if (a >= 0 && a < H && b >= 0 && b < W) {
                                    acc += x.at4(n, c, a, b) * w.at4(f, c, u, v);
                                }
                            }
                        }
                    }
                    y.at4(n, f, i, j) = acc;
                }
            }
        }
    }
    return y;
}

double inner(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        s += a.data[i] * b.data[i];
    }
    return s;
}

}  // namespace

TEST_CASE("tensor shape/data invariant is enforced") {
    CHECK_THROWS_AS(Tensor::from({2, 3}, {1.0, 2.0}), UsageError);
    CHECK_THROWS_AS(Tensor({0, 3}), UsageError);
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
}

TEST_CASE("conv2d zero input gives zero output") {
    Graph g;
    Rng rng(7);
    Var x = g.leaf(Tensor({1, 1, 4, 4}));
    Var w = g.leaf(random_tensor({2, 1, 3, 3}, rng));
    Var b = g.leaf(Tensor({2}));
    Var y = g.conv2d(x, w, b, 1, 1);
    for (double v : Graph::value(y).data) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("conv2d on a center delta reproduces the flipped kernel") {
    Graph g;
    Rng rng(11);
    Tensor xt({1, 1, 3, 3});
    xt.at4(0, 0, 1, 1) = 1.0;
    Tensor wt = random_tensor({1, 1, 3, 3}, rng);
    Tensor bt({1});
    Var y = g.conv2d(g.leaf(xt), g.leaf(wt), g.leaf(bt), 1, 1);
    Tensor expect = conv_oracle(xt, wt, bt, 1, 1);
    const Tensor& got = Graph::value(y);
    REQUIRE(got.shape == expect.shape);
    for (std::size_t i = 0; i < got.data.size(); ++i) {
        CHECK(got.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
    }
    // delta input picks the 180-degree rotated kernel
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(got.at4(0, 0, i, j) == doctest::Approx(wt.at4(0, 0, 2 - i, 2 - j)));
        }
    }
}

TEST_CASE("conv2d matches the direct-summation oracle on random cases") {
    Rng rng(23);
    for (int rep = 0; rep < 8; ++rep) {
        int N = 1 + static_cast<int>(rng.uniform_int(2));
        int C = 1 + static_cast<int>(rng.uniform_int(3));
        int F = 1 + static_cast<int>(rng.uniform_int(3));
        int H = 4 + static_cast<int>(rng.uniform_int(5));
        int W = 4 + static_cast<int>(rng.uniform_int(5));
        int k = rng.bernoulli(0.5) ? 1 : 3;
        int stride = 1 + static_cast<int>(rng.uniform_int(2));
        int pad = static_cast<int>(rng.uniform_int(2));
        if (H + 2 * pad < k || W + 2 * pad < k) {
            continue;
        }
        Tensor x = random_tensor({N, C, H, W}, rng);
        Tensor w = random_tensor({F, C, k, k}, rng);
        Tensor b = random_tensor({F}, rng);
        Graph g;
        Var y = g.conv2d(g.leaf(x), g.leaf(w), g.leaf(b), stride, pad);
        Tensor expect = conv_oracle(x, w, b, stride, pad);
        REQUIRE(Graph::value(y).shape == expect.shape);
        for (std::size_t i = 0; i < expect.data.size(); ++i) {
            CHECK(Graph::value(y).data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d rejects even kernels and channel mismatch") {
    Graph g;
    Var x = g.leaf(Tensor({1, 1, 4, 4}, 1.0));
    Var w_even = g.leaf(Tensor({1, 1, 2, 2}, 1.0));
    Var b = g.leaf(Tensor({1}));
    CHECK_THROWS_AS(g.conv2d(x, w_even, b, 1, 0), ConfigError);
    Var w_chan = g.leaf(Tensor({1, 3, 3, 3}, 1.0));
    CHECK_THROWS_AS(g.conv2d(x, w_chan, b, 1, 1), ConfigError);
}

TEST_CASE("conv2d_transpose zero input, shape contract and adjoint identity") {
    Graph g;
    Var z = g.leaf(Tensor({1, 1, 2, 2}));
    Var w22 = g.leaf(Tensor({1, 1, 2, 2}, 0.5));
    Var b = g.leaf(Tensor({1}));
    Var up = g.conv2d_transpose(z, w22, b, 2, 0);
    CHECK(Graph::value(up).shape == std::vector<int>{1, 1, 4, 4});
    for (double v : Graph::value(up).data) {
        CHECK(v == 0.0);
    }

    // <conv(x; w), y> == <x, deconv(y; w)> with the shared weight buffer.
    // y is the 4x4 tensor in conv-output space; the conv input side is the
    // matched extent deconv_out(4).
    Rng rng(5);
    for (int rep = 0; rep < 5; ++rep) {
        int stride = 2, pad = 1, k = 3;
        Tensor y = random_tensor({1, 1, 4, 4}, rng);
        int H = kernels::deconv_out_extent(4, k, stride, pad);
        Tensor x = random_tensor({1, 1, H, H}, rng);
        Tensor w = random_tensor({1, 1, k, k}, rng);
        Tensor zero_b({1});
        Graph gg;
        Var cy = gg.conv2d(gg.leaf(x), gg.leaf(w), gg.leaf(zero_b), stride, pad);
        REQUIRE(Graph::value(cy).shape == y.shape);
        Var dx = gg.conv2d_transpose(gg.leaf(y), gg.leaf(w), gg.leaf(zero_b), stride, pad);
        REQUIRE(Graph::value(dx).shape == x.shape);
        double lhs = inner(Graph::value(cy), y);
        double rhs = inner(x, Graph::value(dx));
        CHECK(std::fabs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("activations") {
    Graph g;
    Var x = g.leaf(Tensor::from({3}, {-1.0, 0.0, 2.0}));
    Var r = g.relu(x);
    CHECK(Graph::value(r).data == std::vector<double>{0.0, 0.0, 2.0});
    Var s0 = g.sigmoid(g.leaf(Tensor::from({1}, {0.0})));
    CHECK(Graph::value(s0).data[0] == doctest::Approx(0.5));
    Var s1 = g.sigmoid(g.leaf(Tensor::from({1}, {1.0})));
    CHECK(Graph::value(s1).data[0] == doctest::Approx(0.7310585786).epsilon(1e-9));
}

TEST_CASE("global average pool") {
    Graph g;
    Var c = g.global_avg_pool(g.leaf(Tensor({2, 3, 4, 4}, 2.5)));
    for (double v : Graph::value(c).data) {
        CHECK(v == doctest::Approx(2.5));
    }
    Var m = g.global_avg_pool(g.leaf(Tensor::from({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0})));
    CHECK(Graph::value(m).data[0] == doctest::Approx(2.5));
    Var z = g.global_avg_pool(g.leaf(Tensor({1, 2, 3, 3})));
    CHECK(Graph::value(z).data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward: sum and half-sum-of-squares") {
    ParamSet ps;
    Rng rng(3);
    Tensor t = random_tensor({2, 3}, rng);
    t.requires_grad = true;
    Tensor& x = ps.add("x", std::move(t));
    {
        Graph g;
        Var loss = g.sum_all(g.param(x));
        ps.zero_grads();
        g.backward(loss);
        for (double v : x.grad) {
            CHECK(v == doctest::Approx(1.0));
        }
    }
    {
        Graph g;
        Var xv = g.param(x);
        Var loss = g.scale(g.sum_all(g.mul(xv, xv)), 0.5);
        ps.zero_grads();
        g.backward(loss);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            CHECK(x.grad[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward rejects non-scalar loss and accumulates across calls") {
    ParamSet ps;
    Tensor t = Tensor::from({2}, {1.0, 2.0});
    t.requires_grad = true;
    Tensor& x = ps.add("x", std::move(t));
    Graph g;
    Var xv = g.param(x);
    CHECK_THROWS_AS(g.backward(xv), UsageError);
    Var loss = g.sum_all(xv);
    ps.zero_grads();
    g.backward(loss);
    g.backward(loss);
    CHECK(x.grad[0] == doctest::Approx(2.0));
}

TEST_CASE("backward linearity: grad of summed losses equals summed grads") {
    Rng rng(17);
    Tensor base = random_tensor({1, 2, 4, 4}, rng);
    base.requires_grad = true;
    Tensor target1 = random_tensor({1, 2, 4, 4}, rng);
    Tensor target2 = random_tensor({1, 2, 4, 4}, rng);

    auto run = [&](int which) {
        ParamSet ps;
        Tensor& x = ps.add("x", base);
        Graph g;
        Var xv = g.param(x);
        Var d1 = g.sub(xv, g.leaf(target1));
        Var d2 = g.sub(xv, g.leaf(target2));
        Var l1 = g.sum_all(g.mul(d1, d1));
        Var l2 = g.sum_all(g.mul(d2, d2));
        Var loss = which == 0 ? l1 : (which == 1 ? l2 : g.add(l1, l2));
        ps.zero_grads();
        g.backward(loss);
        return x.grad;
    };
    auto g1 = run(0);
    auto g2 = run(1);
    auto gsum = run(2);
    for (std::size_t i = 0; i < gsum.size(); ++i) {
        CHECK(gsum[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
    }
}

TEST_CASE("grad_check: exact on a linear model") {
    ParamSet ps;
    Rng rng(29);
    Tensor w = random_tensor({4, 2}, rng);
    w.requires_grad = true;
    ps.add("w", std::move(w));
    Tensor x = random_tensor({3, 4}, rng);
    Tensor b({2});
    auto build = [&ps, x, b](Graph& g) {
        return g.sum_all(g.linear(g.leaf(x), g.param(ps.at("w")), g.leaf(b)));
    };
    auto report = grad_check(build, ps, 1e-5, 1e-4, 41);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-10);
}

TEST_CASE("grad_check: conv+relu stack passes at 1e-4") {
    ParamSet ps;
    Rng rng(31);
    Tensor w1 = random_tensor({4, 1, 3, 3}, rng, -0.5, 0.5);
    w1.requires_grad = true;
    ps.add("w1", std::move(w1));
    Tensor b1 = random_tensor({4}, rng, -0.1, 0.1);
    b1.requires_grad = true;
    ps.add("b1", std::move(b1));
    Tensor w2 = random_tensor({2, 4, 3, 3}, rng, -0.5, 0.5);
    w2.requires_grad = true;
    ps.add("w2", std::move(w2));
    Tensor b2 = random_tensor({2}, rng, -0.1, 0.1);
    b2.requires_grad = true;
    ps.add("b2", std::move(b2));
    Tensor x = random_tensor({2, 1, 6, 6}, rng);
    auto build = [&ps, x](Graph& g) {
        Var h = g.relu(g.conv2d(g.leaf(x), g.param(ps.at("w1")), g.param(ps.at("b1")), 1, 1));
        h = g.relu(g.conv2d(h, g.param(ps.at("w2")), g.param(ps.at("b2")), 2, 1));
        return g.sum_all(g.mul(h, h));
    };
    auto report = grad_check(build, ps, 1e-5, 1e-4, 43);
    CHECK(report.pass);
}

TEST_CASE("grad_check: corrupted backward rule is caught") {
    ParamSet ps;
    Rng rng(37);
    Tensor t = random_tensor({8}, rng, 0.5, 1.5);
    t.requires_grad = true;
    ps.add("x", std::move(t));
    auto build = [&ps](Graph& g) {
        Var x = g.param(ps.at("x"));
        Var y = g.mul(x, x);
        // destroy the product rule
        Node* yp = y.get();
        Node* xp = x.get();
        y->back = [yp, xp]() {
            for (std::size_t i = 0; i < yp->grad.size(); ++i) {
                xp->grad[i] += 0.25 * yp->grad[i];
            }
        };
        return g.sum_all(y);
    };
    auto report = grad_check(build, ps, 1e-5, 1e-4, 47);
    CHECK_FALSE(report.pass);
}

TEST_CASE("adam: zero grads leave parameters unchanged") {
    ParamSet ps;
    Tensor t = Tensor::from({2}, {0.7, -0.3});
    t.requires_grad = true;
    Tensor& x = ps.add("x", std::move(t));
    x.ensure_grad();
    AdamState st;
    adam_step(ps, st, 0.1);
    CHECK(x.data[0] == doctest::Approx(0.7));
    CHECK(x.data[1] == doctest::Approx(-0.3));
}

TEST_CASE("adam: first step moves a unit-grad scalar by about lr") {
    ParamSet ps;
    Tensor t = Tensor::from({1}, {1.0});
    t.requires_grad = true;
    Tensor& x = ps.add("x", std::move(t));
    x.ensure_grad();
    x.grad[0] = 1.0;
    AdamState st;
    adam_step(ps, st, 0.1);
    CHECK(x.data[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: missing grads raise a usage error") {
    ParamSet ps;
    Tensor t = Tensor::from({1}, {1.0});
    t.requires_grad = true;
    ps.add("x", std::move(t));
    AdamState st;
    CHECK_THROWS_AS(adam_step(ps, st, 0.1), UsageError);
}

TEST_CASE("adam: identical seeds give bit-identical trajectories") {
    auto run = []() {
        Rng rng(99);
        ParamSet ps;
        Tensor w = random_tensor({4, 4}, rng);
        w.requires_grad = true;
        ps.add("w", std::move(w));
        Tensor x = random_tensor({2, 4}, rng);
        Tensor b({4});
        AdamState st;
        for (int i = 0; i < 5; ++i) {
            Graph g;
            Var y = g.linear(g.leaf(x), g.param(ps.at("w")), g.leaf(b));
            Var loss = g.sum_all(g.mul(y, y));
            ps.zero_grads();
            g.backward(loss);
            adam_step(ps, st, 1e-2);
        }
        return ps.at("w").data;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);  // bitwise
}

TEST_CASE("NT1 round-trips tensors bit-exactly") {
    Rng rng(53);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor t = random_tensor({2, 3, 4}, rng, -100.0, 100.0);
        t.data[0] = 1e-17;
        t.data[1] = -0.0;
        std::string path = "/tmp/mds_nt1_test.nt1";
        save_nt1(path, t);
        Tensor back = load_nt1(path);
        CHECK(back.shape == t.shape);
        CHECK(back.data == t.data);  // %.17g is round-trip exact
    }
}

TEST_CASE("checkpoints preserve name order and values") {
    ParamSet ps;
    Rng rng(59);
    ps.add("b.second", random_tensor({3}, rng));
    ps.add("a.first", random_tensor({2, 2}, rng));
    std::string path = "/tmp/mds_ckpt_test.ckpt";
    ps.save(path);
    ParamSet back = ParamSet::load(path);
    REQUIRE(back.size() == 2);
    CHECK(back.name(0) == "b.second");
    CHECK(back.name(1) == "a.first");
    CHECK(back.tensor(0).data == ps.tensor(0).data);
    CHECK(back.tensor(1).data == ps.tensor(1).data);
}

TEST_CASE("forward pass keeps values finite on finite inputs") {
    Rng rng(61);
    Graph g;
    Var x = g.leaf(random_tensor({1, 2, 8, 8}, rng, -10.0, 10.0));
    Var w = g.leaf(random_tensor({4, 2, 3, 3}, rng, -3.0, 3.0));
    Var b = g.leaf(random_tensor({4}, rng));
    Var y = g.sigmoid(g.conv2d(x, w, b, 1, 1));
    CHECK(Graph::value(y).all_finite());
}
