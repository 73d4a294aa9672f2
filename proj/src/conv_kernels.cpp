#include "mds/conv_kernels.hpp"

#include <Eigen/Dense>
#include <vector>

namespace mds::kernels {

using MatrixRd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRd>;
using MapCM = Eigen::Map<const MatrixRd>;

int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

int deconv_out_extent(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
}

// cols is [C*k*k, OH*OW]; zero-padded positions become zero entries.
static void im2col(const double* x, int C, int H, int W,
                   int k, int stride, int pad, int OH, int OW, double* cols) {
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                double* row = cols + (static_cast<std::size_t>(c) * k * k + u * k + v) *
                                         (static_cast<std::size_t>(OH) * OW);
                for (int i = 0; i < OH; ++i) {
                    int a = i * stride - pad + u;
                    double* out = row + static_cast<std::size_t>(i) * OW;
                    if (a < 0 || a >= H) {
                        for (int j = 0; j < OW; ++j) {
                            out[j] = 0.0;
                        }
                        continue;
                    }
                    const double* xrow = xc + static_cast<std::size_t>(a) * W;
                    for (int j = 0; j < OW; ++j) {
                        int b = j * stride - pad + v;
                        out[j] = (b >= 0 && b < W) ? xrow[b] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of a [C*k*k, OH*OW] matrix back into the [C,H,W] image.
static void col2im_add(const double* cols, int C, int H, int W,
                       int k, int stride, int pad, int OH, int OW, double* x) {
    for (int c = 0; c < C; ++c) {
        double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                const double* row = cols + (static_cast<std::size_t>(c) * k * k + u * k + v) *
                                               (static_cast<std::size_t>(OH) * OW);
                for (int i = 0; i < OH; ++i) {
                    int a = i * stride - pad + u;
                    if (a < 0 || a >= H) {
                        continue;
                    }
                    double* xrow = xc + static_cast<std::size_t>(a) * W;
                    const double* in = row + static_cast<std::size_t>(i) * OW;
                    for (int j = 0; j < OW; ++j) {
                        int b = j * stride - pad + v;
                        if (b >= 0 && b < W) {
                            xrow[b] += in[j];
                        }
                    }
                }
            }
        }
    }
}

void corr_forward(const double* x, int N, int C, int H, int W,
                  const double* w, int F, int k, int stride, int pad,
                  const double* bias, double* y, int OH, int OW, bool accumulate) {
    const std::size_t ckk = static_cast<std::size_t>(C) * k * k;
    const std::size_t ohw = static_cast<std::size_t>(OH) * OW;
    std::vector<double> cols(ckk * ohw);
    MapCM wm(w, F, static_cast<Eigen::Index>(ckk));
    for (int n = 0; n < N; ++n) {
        im2col(x + static_cast<std::size_t>(n) * C * H * W, C, H, W, k, stride, pad, OH, OW,
               cols.data());
        MapCM cm(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(ohw));
        MapM ym(y + static_cast<std::size_t>(n) * F * ohw, F, static_cast<Eigen::Index>(ohw));
        if (accumulate) {
            ym.noalias() += wm * cm;
        } else {
            ym.noalias() = wm * cm;
        }
        if (bias != nullptr) {
            for (int f = 0; f < F; ++f) {
                ym.row(f).array() += bias[f];
            }
        }
    }
}

void corr_backward_input(const double* dy, int N, int F, int OH, int OW,
                         const double* w, int C, int k, int stride, int pad,
                         double* dx, int H, int W) {
    const std::size_t ckk = static_cast<std::size_t>(C) * k * k;
    const std::size_t ohw = static_cast<std::size_t>(OH) * OW;
    std::vector<double> dcols(ckk * ohw);
    MapCM wm(w, F, static_cast<Eigen::Index>(ckk));
    for (int n = 0; n < N; ++n) {
        MapCM dym(dy + static_cast<std::size_t>(n) * F * ohw, F, static_cast<Eigen::Index>(ohw));
        MapM dcm(dcols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(ohw));
        dcm.noalias() = wm.transpose() * dym;
        col2im_add(dcols.data(), C, H, W, k, stride, pad, OH, OW,
                   dx + static_cast<std::size_t>(n) * C * H * W);
    }
}

void corr_backward_weight(const double* x, int N, int C, int H, int W,
                          const double* dy, int F, int OH, int OW,
                          int k, int stride, int pad, double* dw) {
    const std::size_t ckk = static_cast<std::size_t>(C) * k * k;
    const std::size_t ohw = static_cast<std::size_t>(OH) * OW;
    std::vector<double> cols(ckk * ohw);
    MapM dwm(dw, F, static_cast<Eigen::Index>(ckk));
    for (int n = 0; n < N; ++n) {
        im2col(x + static_cast<std::size_t>(n) * C * H * W, C, H, W, k, stride, pad, OH, OW,
               cols.data());
        MapCM cm(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(ohw));
        MapCM dym(dy + static_cast<std::size_t>(n) * F * ohw, F, static_cast<Eigen::Index>(ohw));
        dwm.noalias() += dym * cm.transpose();
    }
}

}  // namespace mds::kernels
