#pragma once

namespace mds::kernels {

// Cross-correlation kernels shared by conv2d forward/backward and the
// transposed convolution (which is the adjoint of the forward pass).
// All buffers are dense row-major NCHW / [F,C,k,k].

int conv_out_extent(int in, int k, int stride, int pad);
int deconv_out_extent(int in, int k, int stride, int pad);

// y[n,f,i,j] = bias[f] + sum_{c,u,v} x[n,c, i*s-p+u, j*s-p+v] * w[f,c,u,v]
// bias may be null. Overwrites y unless accumulate is set.
void corr_forward(const double* x, int N, int C, int H, int W,
                  const double* w, int F, int k, int stride, int pad,
                  const double* bias, double* y, int OH, int OW, bool accumulate = false);

// Adjoint w.r.t. x: scatters dy back through the correlation. Accumulates
// into dx (caller zeroes when overwrite semantics are wanted).
void corr_backward_input(const double* dy, int N, int F, int OH, int OW,
                         const double* w, int C, int k, int stride, int pad,
                         double* dx, int H, int W);

// Accumulates dw[f,c,u,v] += sum_{n,i,j} dy[n,f,i,j] * x[n,c, i*s-p+u, j*s-p+v].
void corr_backward_weight(const double* x, int N, int C, int H, int W,
                          const double* dy, int F, int OH, int OW,
                          int k, int stride, int pad, double* dw);

}  // namespace mds::kernels
