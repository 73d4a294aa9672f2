#include "mds/graph.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "mds/conv_kernels.hpp"
#include "mds/errors.hpp"

namespace mds {

using MatrixRd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRd>;
using MapCM = Eigen::Map<const MatrixRd>;

double Graph::scalar(const Var& v) {
    if (v->value.numel() != 1) {
        throw UsageError("scalar() on non-scalar value");
    }
    return v->value.data[0];
}

Var Graph::make(Tensor value, std::vector<Var> inputs, const char* op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->op = op;
    for (const auto& in : n->inputs) {
        n->needs_grad = n->needs_grad || in->needs_grad;
    }
    order_.push_back(n);
    return n;
}

void Graph::check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->value.shape != b->value.shape) {
        throw UsageError(std::string(op) + ": shape mismatch");
    }
}

Var Graph::leaf(Tensor t) {
    return make(std::move(t), {}, "leaf");
}

Var Graph::param(Tensor& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) {
        return it->second;
    }
    Tensor snapshot = p;
    snapshot.grad.clear();
    auto n = make(std::move(snapshot), {}, "param");
    n->bound = &p;
    n->needs_grad = p.requires_grad;
    bound_.emplace(&p, n);
    return n;
}

Var Graph::add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += b->value.data[i];
    }
    auto n = make(std::move(out), {a, b}, "add");
    Node* np = n.get();
    Node* ap = a.get();
    Node* bp = b.get();
    n->back = [np, ap, bp]() {
        if (ap->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                ap->grad[i] += np->grad[i];
            }
        }
        if (bp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                bp->grad[i] += np->grad[i];
            }
        }
    };
    return n;
}

Var Graph::sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] -= b->value.data[i];
    }
    auto n = make(std::move(out), {a, b}, "sub");
    Node* np = n.get();
    Node* ap = a.get();
    Node* bp = b.get();
    n->back = [np, ap, bp]() {
        if (ap->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                ap->grad[i] += np->grad[i];
            }
        }
        if (bp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                bp->grad[i] -= np->grad[i];
            }
        }
    };
    return n;
}

Var Graph::mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= b->value.data[i];
    }
    auto n = make(std::move(out), {a, b}, "mul");
    Node* np = n.get();
    Node* ap = a.get();
    Node* bp = b.get();
    n->back = [np, ap, bp]() {
        if (ap->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                ap->grad[i] += np->grad[i] * bp->value.data[i];
            }
        }
        if (bp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                bp->grad[i] += np->grad[i] * ap->value.data[i];
            }
        }
    };
    return n;
}

Var Graph::scale(const Var& a, double s) {
    return affine_elem(a, s, 0.0);
}

Var Graph::affine_elem(const Var& x, double a, double b) {
    Tensor out = x->value;
    for (double& v : out.data) {
        v = a * v + b;
    }
    auto n = make(std::move(out), {x}, "affine_elem");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp, a]() {
        if (xp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                xp->grad[i] += a * np->grad[i];
            }
        }
    };
    return n;
}

Var Graph::relu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) {
        v = v > 0.0 ? v : 0.0;
    }
    auto n = make(std::move(out), {x}, "relu");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp]() {
        if (xp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                if (xp->value.data[i] > 0.0) {
                    xp->grad[i] += np->grad[i];
                }
            }
        }
    };
    return n;
}

Var Graph::sigmoid(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) {
        v = 1.0 / (1.0 + std::exp(-v));
    }
    auto n = make(std::move(out), {x}, "sigmoid");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp]() {
        if (xp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                double y = np->value.data[i];
                xp->grad[i] += np->grad[i] * y * (1.0 - y);
            }
        }
    };
    return n;
}

Var Graph::log_elem(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) {
        if (v <= 0.0) {
            throw NumericError("log of non-positive value");
        }
        v = std::log(v);
    }
    auto n = make(std::move(out), {x}, "log");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp]() {
        if (xp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                xp->grad[i] += np->grad[i] / xp->value.data[i];
            }
        }
    };
    return n;
}

Var Graph::clamp(const Var& x, double lo, double hi) {
    if (!(lo < hi)) {
        throw UsageError("clamp: lo must be < hi");
    }
    Tensor out = x->value;
    for (double& v : out.data) {
        v = v < lo ? lo : (v > hi ? hi : v);
    }
    auto n = make(std::move(out), {x}, "clamp");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp, lo, hi]() {
        if (xp->needs_grad) {
            for (std::size_t i = 0; i < np->grad.size(); ++i) {
                double v = xp->value.data[i];
                if (v > lo && v < hi) {
                    xp->grad[i] += np->grad[i];
                }
            }
        }
    };
    return n;
}

Var Graph::conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 4 || wv.ndim() != 4) {
        throw ConfigError("conv2d: expects 4-d input and weight");
    }
    int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int F = wv.dim(0), k = wv.dim(2);
    if (wv.dim(1) != C) {
        throw ConfigError("conv2d: input channels do not match weight");
    }
    if (wv.dim(3) != k || k % 2 == 0) {
        throw ConfigError("conv2d: kernel must be square with odd extent");
    }
    if (stride < 1 || pad < 0) {
        throw ConfigError("conv2d: stride >= 1 and pad >= 0 required");
    }
    if (b->value.shape != std::vector<int>{F}) {
        throw ConfigError("conv2d: bias shape must be [F]");
    }
    int OH = kernels::conv_out_extent(H, k, stride, pad);
    int OW = kernels::conv_out_extent(W, k, stride, pad);
    if (OH <= 0 || OW <= 0) {
        throw ConfigError("conv2d: non-positive output extent");
    }
    Tensor out({N, F, OH, OW});
    kernels::corr_forward(xv.data.data(), N, C, H, W, wv.data.data(), F, k, stride, pad,
                          b->value.data.data(), out.data.data(), OH, OW);
    auto n = make(std::move(out), {x, w, b}, "conv2d");
    Node* np = n.get();
    Node* xp = x.get();
    Node* wp = w.get();
    Node* bp = b.get();
    n->back = [np, xp, wp, bp, N, C, H, W, F, k, stride, pad, OH, OW]() {
        if (xp->needs_grad) {
            kernels::corr_backward_input(np->grad.data(), N, F, OH, OW, wp->value.data.data(), C,
                                         k, stride, pad, xp->grad.data(), H, W);
        }
        if (wp->needs_grad) {
            kernels::corr_backward_weight(xp->value.data.data(), N, C, H, W, np->grad.data(), F,
                                          OH, OW, k, stride, pad, wp->grad.data());
        }
        if (bp->needs_grad) {
            const std::size_t ohw = static_cast<std::size_t>(OH) * OW;
            for (int nn = 0; nn < N; ++nn) {
                for (int f = 0; f < F; ++f) {
                    const double* g = np->grad.data() + (static_cast<std::size_t>(nn) * F + f) * ohw;
                    double s = 0.0;
                    for (std::size_t i = 0; i < ohw; ++i) {
                        s += g[i];
                    }
                    bp->grad[static_cast<std::size_t>(f)] += s;
                }
            }
        }
    };
    return n;
}

Var Graph::conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 4 || wv.ndim() != 4) {
        throw ConfigError("conv2d_transpose: expects 4-d input and weight");
    }
    int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int F = wv.dim(1), k = wv.dim(2);
    if (wv.dim(0) != C) {
        throw ConfigError("conv2d_transpose: input channels do not match weight");
    }
    if (wv.dim(3) != k) {
        throw ConfigError("conv2d_transpose: kernel must be square");
    }
    if (stride != 1 && stride != 2) {
        throw ConfigError("conv2d_transpose: stride must be 1 or 2");
    }
    if (b->value.shape != std::vector<int>{F}) {
        throw ConfigError("conv2d_transpose: bias shape must be [F]");
    }
    int OH = kernels::deconv_out_extent(H, k, stride, pad);
    int OW = kernels::deconv_out_extent(W, k, stride, pad);
    if (OH <= 0 || OW <= 0) {
        throw ConfigError("conv2d_transpose: non-positive output extent");
    }
    Tensor out({N, F, OH, OW});
    // forward of the transpose == adjoint (input-gradient) of conv2d
    kernels::corr_backward_input(xv.data.data(), N, C, H, W, wv.data.data(), F, k, stride, pad,
                                 out.data.data(), OH, OW);
    const std::size_t ohw = static_cast<std::size_t>(OH) * OW;
    for (int nn = 0; nn < N; ++nn) {
        for (int f = 0; f < F; ++f) {
            double* dst = out.data.data() + (static_cast<std::size_t>(nn) * F + f) * ohw;
            double bias = b->value.data[static_cast<std::size_t>(f)];
            for (std::size_t i = 0; i < ohw; ++i) {
                dst[i] += bias;
            }
        }
    }
    auto n = make(std::move(out), {x, w, b}, "conv2d_transpose");
    Node* np = n.get();
    Node* xp = x.get();
    Node* wp = w.get();
    Node* bp = b.get();
    n->back = [np, xp, wp, bp, N, C, H, W, F, k, stride, pad, OH, OW]() {
        if (xp->needs_grad) {
            kernels::corr_forward(np->grad.data(), N, F, OH, OW, wp->value.data.data(), C, k,
                                  stride, pad, nullptr, xp->grad.data(), H, W,
                                  /*accumulate=*/true);
        }
        if (wp->needs_grad) {
            kernels::corr_backward_weight(np->grad.data(), N, F, OH, OW, xp->value.data.data(), C,
                                          H, W, k, stride, pad, wp->grad.data());
        }
        if (bp->needs_grad) {
            const std::size_t sz = static_cast<std::size_t>(OH) * OW;
            for (int nn = 0; nn < N; ++nn) {
                for (int f = 0; f < F; ++f) {
                    const double* g = np->grad.data() + (static_cast<std::size_t>(nn) * F + f) * sz;
                    double s = 0.0;
                    for (std::size_t i = 0; i < sz; ++i) {
                        s += g[i];
                    }
                    bp->grad[static_cast<std::size_t>(f)] += s;
                }
            }
        }
    };
    return n;
}

Var Graph::linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(0)) {
        throw ConfigError("linear: expects x[N,In], w[In,Out]");
    }
    int N = xv.dim(0), In = xv.dim(1), Out = wv.dim(1);
    if (b->value.shape != std::vector<int>{Out}) {
        throw ConfigError("linear: bias shape must be [Out]");
    }
    Tensor out({N, Out});
    {
        MapCM xm(xv.data.data(), N, In);
        MapCM wm(wv.data.data(), In, Out);
        MapM ym(out.data.data(), N, Out);
        ym.noalias() = xm * wm;
        for (int r = 0; r < N; ++r) {
            for (int c = 0; c < Out; ++c) {
                ym(r, c) += b->value.data[static_cast<std::size_t>(c)];
            }
        }
    }
    auto n = make(std::move(out), {x, w, b}, "linear");
    Node* np = n.get();
    Node* xp = x.get();
    Node* wp = w.get();
    Node* bp = b.get();
    n->back = [np, xp, wp, bp, N, In, Out]() {
        MapCM gym(np->grad.data(), N, Out);
        if (xp->needs_grad) {
            MapCM wm(wp->value.data.data(), In, Out);
            MapM gxm(xp->grad.data(), N, In);
            gxm.noalias() += gym * wm.transpose();
        }
        if (wp->needs_grad) {
            MapCM xm(xp->value.data.data(), N, In);
            MapM gwm(wp->grad.data(), In, Out);
            gwm.noalias() += xm.transpose() * gym;
        }
        if (bp->needs_grad) {
            for (int r = 0; r < N; ++r) {
                for (int c = 0; c < Out; ++c) {
                    bp->grad[static_cast<std::size_t>(c)] += gym(r, c);
                }
            }
        }
    };
    return n;
}

Var Graph::global_avg_pool(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) {
        throw UsageError("global_avg_pool: expects [N,C,H,W]");
    }
    int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const double inv = 1.0 / (static_cast<double>(H) * W);
    Tensor out({N, C});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int nn = 0; nn < N; ++nn) {
        for (int c = 0; c < C; ++c) {
            const double* src = xv.data.data() + (static_cast<std::size_t>(nn) * C + c) * hw;
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                s += src[i];
            }
            out.at2(nn, c) = s * inv;
        }
    }
    auto n = make(std::move(out), {x}, "global_avg_pool");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp, N, C, hw, inv]() {
        if (!xp->needs_grad) {
            return;
        }
        for (int nn = 0; nn < N; ++nn) {
            for (int c = 0; c < C; ++c) {
                double g = np->grad[static_cast<std::size_t>(nn) * C + c] * inv;
                double* dst = xp->grad.data() + (static_cast<std::size_t>(nn) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    dst[i] += g;
                }
            }
        }
    };
    return n;
}

Var Graph::spatial_sum(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) {
        throw UsageError("spatial_sum: expects [N,C,H,W]");
    }
    int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out({N, C});
    for (int nn = 0; nn < N; ++nn) {
        for (int c = 0; c < C; ++c) {
            const double* src = xv.data.data() + (static_cast<std::size_t>(nn) * C + c) * hw;
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                s += src[i];
            }
            out.at2(nn, c) = s;
        }
    }
    auto n = make(std::move(out), {x}, "spatial_sum");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp, N, C, hw]() {
        if (!xp->needs_grad) {
            return;
        }
        for (int nn = 0; nn < N; ++nn) {
            for (int c = 0; c < C; ++c) {
                double g = np->grad[static_cast<std::size_t>(nn) * C + c];
                double* dst = xp->grad.data() + (static_cast<std::size_t>(nn) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    dst[i] += g;
                }
            }
        }
    };
    return n;
}

Var Graph::channel_scale(const Var& x, const Var& s) {
    const Tensor& xv = x->value;
    const Tensor& sv = s->value;
    if (xv.ndim() != 4 || sv.ndim() != 2 || sv.dim(0) != xv.dim(0) || sv.dim(1) != xv.dim(1)) {
        throw UsageError("channel_scale: expects x[N,C,H,W], s[N,C]");
    }
    int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out = xv;
    for (int nn = 0; nn < N; ++nn) {
        for (int c = 0; c < C; ++c) {
            double f = sv.at2(nn, c);
            double* dst = out.data.data() + (static_cast<std::size_t>(nn) * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                dst[i] *= f;
            }
        }
    }
    auto n = make(std::move(out), {x, s}, "channel_scale");
    Node* np = n.get();
    Node* xp = x.get();
    Node* sp = s.get();
    n->back = [np, xp, sp, N, C, hw]() {
        for (int nn = 0; nn < N; ++nn) {
            for (int c = 0; c < C; ++c) {
                const std::size_t base = (static_cast<std::size_t>(nn) * C + c) * hw;
                const double* g = np->grad.data() + base;
                if (xp->needs_grad) {
                    double f = sp->value.at2(nn, c);
                    double* dx = xp->grad.data() + base;
                    for (std::size_t i = 0; i < hw; ++i) {
                        dx[i] += g[i] * f;
                    }
                }
                if (sp->needs_grad) {
                    const double* xd = xp->value.data.data() + base;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) {
                        acc += g[i] * xd[i];
                    }
                    sp->grad[static_cast<std::size_t>(nn) * C + c] += acc;
                }
            }
        }
    };
    return n;
}

Var Graph::concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
        av.dim(3) != bv.dim(3)) {
        throw UsageError("concat_channels: spatial/batch dims must match");
    }
    int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out({N, Ca + Cb, H, W});
    for (int nn = 0; nn < N; ++nn) {
        double* dst = out.data.data() + static_cast<std::size_t>(nn) * (Ca + Cb) * hw;
        const double* pa = av.data.data() + static_cast<std::size_t>(nn) * Ca * hw;
        const double* pb = bv.data.data() + static_cast<std::size_t>(nn) * Cb * hw;
        std::copy(pa, pa + static_cast<std::size_t>(Ca) * hw, dst);
        std::copy(pb, pb + static_cast<std::size_t>(Cb) * hw, dst + static_cast<std::size_t>(Ca) * hw);
    }
    auto n = make(std::move(out), {a, b}, "concat_channels");
    Node* np = n.get();
    Node* ap = a.get();
    Node* bp = b.get();
    n->back = [np, ap, bp, N, Ca, Cb, hw]() {
        for (int nn = 0; nn < N; ++nn) {
            const double* g = np->grad.data() + static_cast<std::size_t>(nn) * (Ca + Cb) * hw;
            if (ap->needs_grad) {
                double* da = ap->grad.data() + static_cast<std::size_t>(nn) * Ca * hw;
                for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * hw; ++i) {
                    da[i] += g[i];
                }
            }
            if (bp->needs_grad) {
                double* db = bp->grad.data() + static_cast<std::size_t>(nn) * Cb * hw;
                const double* gb = g + static_cast<std::size_t>(Ca) * hw;
                for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * hw; ++i) {
                    db[i] += gb[i];
                }
            }
        }
    };
    return n;
}

Var Graph::sum_all(const Var& x) {
    double s = 0.0;
    for (double v : x->value.data) {
        s += v;
    }
    auto n = make(Tensor::from({1}, {s}), {x}, "sum_all");
    Node* np = n.get();
    Node* xp = x.get();
    n->back = [np, xp]() {
        if (xp->needs_grad) {
            double g = np->grad[0];
            for (double& d : xp->grad) {
                d += g;
            }
        }
    };
    return n;
}

void Graph::backward(const Var& loss) {
    if (loss->value.numel() != 1) {
        throw UsageError("backward: loss must be scalar");
    }
    if (!loss->needs_grad) {
        return;  // nothing requires grad anywhere upstream
    }
    for (auto& n : order_) {
        if (n->needs_grad) {
            n->grad.assign(n->value.data.size(), 0.0);
        }
    }
    loss->grad[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = it->get();
        if (n->needs_grad && n->back) {
            n->back();
        }
    }
    for (auto& n : order_) {
        if (n->bound != nullptr && n->bound->requires_grad && n->needs_grad) {
            n->bound->ensure_grad();
            for (std::size_t i = 0; i < n->grad.size(); ++i) {
                n->bound->grad[i] += n->grad[i];
            }
        }
    }
}

}  // namespace mds
