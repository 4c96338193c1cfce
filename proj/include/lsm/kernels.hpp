#pragma once

#include <cstdint>

// Row-major dense kernels backing the tensor ops. Each OpenMP kernel has a
// _serial twin that runs the identical per-output arithmetic in the same
// order, so the two are bitwise equal; tests rely on that and
// tools/bench_kernels compares their throughput. Parallel loops only ever
// split across independent output elements, which keeps results bitwise
// reproducible for any thread count.

namespace lsm::kernels {

// y[m x n] = a[m x k] . b[k x n]
void matmul_nn_serial(const double* a, const double* b, double* y, long m, long k, long n);
void matmul_nn(const double* a, const double* b, double* y, long m, long k, long n);

// y[m x n] = a[m x k] . b[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* y, long m, long k, long n);
void matmul_nt(const double* a, const double* b, double* y, long m, long k, long n);

// y[k x n] = a[m x k]^T . b[m x n]
void matmul_tn_serial(const double* a, const double* b, double* y, long m, long k, long n);
void matmul_tn(const double* a, const double* b, double* y, long m, long k, long n);

// Row softmax with max-subtraction stabilization; rows sum to 1.
void softmax_rows_serial(const double* x, double* y, long m, long n);
void softmax_rows(const double* x, double* y, long m, long n);

// Cross-correlation, zero padding, channel-last layout.
// in: [h x w x ci], kernel: [kh x kw x ci x co], out: [ho x wo x co].
void conv2d_serial(const double* in, long h, long w, long ci, const double* ker, long kh,
                   long kw, long co, long stride, long pad, double* out, long ho, long wo);
void conv2d(const double* in, long h, long w, long ci, const double* ker, long kh, long kw,
            long co, long stride, long pad, double* out, long ho, long wo);
void conv2d_grad_input(const double* gout, long ho, long wo, const double* ker, long kh,
                       long kw, long ci, long co, long stride, long pad, double* gin, long h,
                       long w);
void conv2d_grad_kernel(const double* gout, long ho, long wo, const double* in, long h, long w,
                        long ci, long co, long kh, long kw, long stride, long pad, double* gker);

// in: [n x ci], kernel: [kw x ci x co], out: [no x co].
void conv1d_serial(const double* in, long n, long ci, const double* ker, long kw, long co,
                   long stride, long pad, double* out, long no);
void conv1d(const double* in, long n, long ci, const double* ker, long kw, long co, long stride,
            long pad, double* out, long no);
void conv1d_grad_input(const double* gout, long no, const double* ker, long kw, long ci, long co,
                       long stride, long pad, double* gin, long n);
void conv1d_grad_kernel(const double* gout, long no, const double* in, long n, long ci, long co,
                        long kw, long stride, long pad, double* gker);

// Per-window maxima; argmax stores the flat input index of the first
// (row-major) maximum so the adjoint can route gradients.
void pool_max2d(const double* in, long h, long w, long c, long window, double* out,
                int64_t* argmax);
void pool_max1d(const double* in, long n, long c, long window, double* out, int64_t* argmax);

// Align-corners linear resampling, channel-last.
void interp_linear1d_serial(const double* in, long n, long c, double* out, long no);
void interp_linear1d(const double* in, long n, long c, double* out, long no);
void interp_bilinear2d_serial(const double* in, long h, long w, long c, double* out, long ho,
                              long wo);
void interp_bilinear2d(const double* in, long h, long w, long c, double* out, long ho, long wo);
// Adjoints scatter into gin with the same interpolation weights (serial:
// target cells collide).
void interp_linear1d_adjoint(const double* gout, long no, long c, double* gin, long n);
void interp_bilinear2d_adjoint(const double* gout, long ho, long wo, long c, double* gin, long h,
                               long w);

// out = t + w0 (per row) + sum_k wsin[k-1] sin(k t) + wcos[k-1] cos(k t),
// t: [rows x d], w0: [d], wsin/wcos: [half_n].
void spectral_forward_serial(const double* t, long rows, long d, const double* w0,
                             const double* wsin, const double* wcos, long half_n, double* out);
void spectral_forward(const double* t, long rows, long d, const double* w0, const double* wsin,
                      const double* wcos, long half_n, double* out);
void spectral_backward(const double* t, long rows, long d, const double* wsin, const double* wcos,
                       long half_n, const double* gout, double* gt, double* gw0, double* gwsin,
                       double* gwcos);

// Random Fourier series evaluation on a regular grid over the unit box.
// Rank 2: point (i,j) at (i*hx, j*hy); modes hold (kx, ky, amplitude, phase).
void grf_eval2d(const double* kx, const double* ky, const double* amp, const double* phase,
                long n_modes, long extent, double* out);
void grf_eval1d(const double* k, const double* amp, const double* phase, long n_modes,
                long extent, double* out);

}  // namespace lsm::kernels
