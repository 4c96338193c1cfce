#include "lsm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lsm::kernels {

namespace {
// Below this many fused multiply-adds the fork/join overhead dominates.
constexpr long kGrain = 1L << 14;
}  // namespace

void matmul_nn_serial(const double* a, const double* b, double* y, long m, long k, long n) {
  std::memset(y, 0, sizeof(double) * static_cast<size_t>(m * n));
  for (long i = 0; i < m; ++i) {
    double* yrow = y + i * n;
    const double* arow = a + i * k;
    for (long p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (long j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

void matmul_nn(const double* a, const double* b, double* y, long m, long k, long n) {
  const bool par = m * k * n > kGrain && m > 1;
#pragma omp parallel for if (par) schedule(static)
  for (long i = 0; i < m; ++i) {
    double* yrow = y + i * n;
    const double* arow = a + i * k;
    for (long j = 0; j < n; ++j) yrow[j] = 0.0;
    for (long p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (long j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

void matmul_nt_serial(const double* a, const double* b, double* y, long m, long k, long n) {
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (long j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (long p = 0; p < k; ++p) acc += arow[p] * brow[p];
      y[i * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* y, long m, long k, long n) {
  const bool par = m * k * n > kGrain && m > 1;
#pragma omp parallel for if (par) schedule(static)
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (long j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (long p = 0; p < k; ++p) acc += arow[p] * brow[p];
      y[i * n + j] = acc;
    }
  }
}

void matmul_tn_serial(const double* a, const double* b, double* y, long m, long k, long n) {
  for (long p = 0; p < k; ++p) {
    double* yrow = y + p * n;
    for (long j = 0; j < n; ++j) yrow[j] = 0.0;
    for (long i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* brow = b + i * n;
      for (long j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* y, long m, long k, long n) {
  const bool par = m * k * n > kGrain && k > 1;
#pragma omp parallel for if (par) schedule(static)
  for (long p = 0; p < k; ++p) {
    double* yrow = y + p * n;
    for (long j = 0; j < n; ++j) yrow[j] = 0.0;
    for (long i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* brow = b + i * n;
      for (long j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

namespace {
inline void softmax_row(const double* x, double* y, long n) {
  double mx = x[0];
  for (long j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (long j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (long j = 0; j < n; ++j) y[j] *= inv;
}
}  // namespace

void softmax_rows_serial(const double* x, double* y, long m, long n) {
  for (long i = 0; i < m; ++i) softmax_row(x + i * n, y + i * n, n);
}

void softmax_rows(const double* x, double* y, long m, long n) {
#pragma omp parallel for if (m * n > kGrain && m > 1) schedule(static)
  for (long i = 0; i < m; ++i) softmax_row(x + i * n, y + i * n, n);
}

namespace {
inline void conv2d_cell(const double* in, long h, long w, long ci, const double* ker, long kh,
                        long kw, long co, long stride, long pad, double* out, long wo, long oy,
                        long ox) {
  double* ocell = out + (oy * wo + ox) * co;
  for (long oc = 0; oc < co; ++oc) ocell[oc] = 0.0;
  const long iy0 = oy * stride - pad;
  const long ix0 = ox * stride - pad;
  for (long ky = 0; ky < kh; ++ky) {
    const long iy = iy0 + ky;
    if (iy < 0 || iy >= h) continue;
    for (long kx = 0; kx < kw; ++kx) {
      const long ix = ix0 + kx;
      if (ix < 0 || ix >= w) continue;
      const double* icell = in + (iy * w + ix) * ci;
      const double* kcell = ker + ((ky * kw + kx) * ci) * co;
      for (long ic = 0; ic < ci; ++ic) {
        const double iv = icell[ic];
        const double* krow = kcell + ic * co;
        for (long oc = 0; oc < co; ++oc) ocell[oc] += iv * krow[oc];
      }
    }
  }
}
}  // namespace

void conv2d_serial(const double* in, long h, long w, long ci, const double* ker, long kh, long kw,
                   long co, long stride, long pad, double* out, long ho, long wo) {
  for (long oy = 0; oy < ho; ++oy)
    for (long ox = 0; ox < wo; ++ox)
      conv2d_cell(in, h, w, ci, ker, kh, kw, co, stride, pad, out, wo, oy, ox);
}

void conv2d(const double* in, long h, long w, long ci, const double* ker, long kh, long kw,
            long co, long stride, long pad, double* out, long ho, long wo) {
  const bool par = ho * wo * kh * kw * ci * co > kGrain && ho > 1;
#pragma omp parallel for if (par) schedule(static)
  for (long oy = 0; oy < ho; ++oy)
    for (long ox = 0; ox < wo; ++ox)
      conv2d_cell(in, h, w, ci, ker, kh, kw, co, stride, pad, out, wo, oy, ox);
}

void conv2d_grad_input(const double* gout, long ho, long wo, const double* ker, long kh, long kw,
                       long ci, long co, long stride, long pad, double* gin, long h, long w) {
  const bool par = h * w * kh * kw * ci * co > kGrain && h > 1;
#pragma omp parallel for if (par) schedule(static)
  for (long iy = 0; iy < h; ++iy) {
    for (long ix = 0; ix < w; ++ix) {
      double* gcell = gin + (iy * w + ix) * ci;
      for (long ic = 0; ic < ci; ++ic) gcell[ic] = 0.0;
      // Output cells whose receptive field covers (iy, ix).
      for (long ky = 0; ky < kh; ++ky) {
        const long num_y = iy + pad - ky;
        if (num_y < 0 || num_y % stride != 0) continue;
        const long oy = num_y / stride;
        if (oy >= ho) continue;
        for (long kx = 0; kx < kw; ++kx) {
          const long num_x = ix + pad - kx;
          if (num_x < 0 || num_x % stride != 0) continue;
          const long ox = num_x / stride;
          if (ox >= wo) continue;
          const double* grow = gout + (oy * wo + ox) * co;
          const double* kcell = ker + ((ky * kw + kx) * ci) * co;
          for (long ic = 0; ic < ci; ++ic) {
            double acc = 0.0;
            const double* krow = kcell + ic * co;
            for (long oc = 0; oc < co; ++oc) acc += grow[oc] * krow[oc];
            gcell[ic] += acc;
          }
        }
      }
    }
  }
}

void conv2d_grad_kernel(const double* gout, long ho, long wo, const double* in, long h, long w,
                        long ci, long co, long kh, long kw, long stride, long pad, double* gker) {
  const bool par = ho * wo * kh * kw * ci * co > kGrain && kh * kw > 1;
#pragma omp parallel for if (par) schedule(static) collapse(2)
  for (long ky = 0; ky < kh; ++ky) {
    for (long kx = 0; kx < kw; ++kx) {
      double* kcell = gker + ((ky * kw + kx) * ci) * co;
      for (long q = 0; q < ci * co; ++q) kcell[q] = 0.0;
      for (long oy = 0; oy < ho; ++oy) {
        const long iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (long ox = 0; ox < wo; ++ox) {
          const long ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const double* icell = in + (iy * w + ix) * ci;
          const double* grow = gout + (oy * wo + ox) * co;
          for (long ic = 0; ic < ci; ++ic) {
            const double iv = icell[ic];
            double* krow = kcell + ic * co;
            for (long oc = 0; oc < co; ++oc) krow[oc] += iv * grow[oc];
          }
        }
      }
    }
  }
}

void conv1d_serial(const double* in, long n, long ci, const double* ker, long kw, long co,
                   long stride, long pad, double* out, long no) {
  for (long ox = 0; ox < no; ++ox) {
    double* ocell = out + ox * co;
    for (long oc = 0; oc < co; ++oc) ocell[oc] = 0.0;
    const long ix0 = ox * stride - pad;
    for (long kx = 0; kx < kw; ++kx) {
      const long ix = ix0 + kx;
      if (ix < 0 || ix >= n) continue;
      const double* icell = in + ix * ci;
      const double* kcell = ker + (kx * ci) * co;
      for (long ic = 0; ic < ci; ++ic) {
        const double iv = icell[ic];
        const double* krow = kcell + ic * co;
        for (long oc = 0; oc < co; ++oc) ocell[oc] += iv * krow[oc];
      }
    }
  }
}

void conv1d(const double* in, long n, long ci, const double* ker, long kw, long co, long stride,
            long pad, double* out, long no) {
  const bool par = no * kw * ci * co > kGrain && no > 1;
#pragma omp parallel for if (par) schedule(static)
  for (long ox = 0; ox < no; ++ox) {
    double* ocell = out + ox * co;
    for (long oc = 0; oc < co; ++oc) ocell[oc] = 0.0;
    const long ix0 = ox * stride - pad;
    for (long kx = 0; kx < kw; ++kx) {
      const long ix = ix0 + kx;
      if (ix < 0 || ix >= n) continue;
      const double* icell = in + ix * ci;
      const double* kcell = ker + (kx * ci) * co;
      for (long ic = 0; ic < ci; ++ic) {
        const double iv = icell[ic];
        const double* krow = kcell + ic * co;
        for (long oc = 0; oc < co; ++oc) ocell[oc] += iv * krow[oc];
      }
    }
  }
}

void conv1d_grad_input(const double* gout, long no, const double* ker, long kw, long ci, long co,
                       long stride, long pad, double* gin, long n) {
#pragma omp parallel for if (n * kw * ci * co > kGrain && n > 1) schedule(static)
  for (long ix = 0; ix < n; ++ix) {
    double* gcell = gin + ix * ci;
    for (long ic = 0; ic < ci; ++ic) gcell[ic] = 0.0;
    for (long kx = 0; kx < kw; ++kx) {
      const long num = ix + pad - kx;
      if (num < 0 || num % stride != 0) continue;
      const long ox = num / stride;
      if (ox >= no) continue;
      const double* grow = gout + ox * co;
      const double* kcell = ker + (kx * ci) * co;
      for (long ic = 0; ic < ci; ++ic) {
        double acc = 0.0;
        const double* krow = kcell + ic * co;
        for (long oc = 0; oc < co; ++oc) acc += grow[oc] * krow[oc];
        gcell[ic] += acc;
      }
    }
  }
}

void conv1d_grad_kernel(const double* gout, long no, const double* in, long n, long ci, long co,
                        long kw, long stride, long pad, double* gker) {
#pragma omp parallel for if (no * kw * ci * co > kGrain && kw > 1) schedule(static)
  for (long kx = 0; kx < kw; ++kx) {
    double* kcell = gker + (kx * ci) * co;
    for (long q = 0; q < ci * co; ++q) kcell[q] = 0.0;
    for (long ox = 0; ox < no; ++ox) {
      const long ix = ox * stride - pad + kx;
      if (ix < 0 || ix >= n) continue;
      const double* icell = in + ix * ci;
      const double* grow = gout + ox * co;
      for (long ic = 0; ic < ci; ++ic) {
        const double iv = icell[ic];
        double* krow = kcell + ic * co;
        for (long oc = 0; oc < co; ++oc) krow[oc] += iv * grow[oc];
      }
    }
  }
}

void pool_max2d(const double* in, long h, long w, long c, long window, double* out,
                int64_t* argmax) {
  const long ho = h / window, wo = w / window;
#pragma omp parallel for if (h * w * c > kGrain && ho > 1) schedule(static)
  for (long oy = 0; oy < ho; ++oy) {
    for (long ox = 0; ox < wo; ++ox) {
      for (long ch = 0; ch < c; ++ch) {
        double best = -1.0;
        int64_t best_idx = -1;
        for (long dy = 0; dy < window; ++dy) {
          for (long dx = 0; dx < window; ++dx) {
            const long iy = oy * window + dy, ix = ox * window + dx;
            const long idx = (iy * w + ix) * c + ch;
            if (best_idx < 0 || in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        const long o = (oy * wo + ox) * c + ch;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
}

void pool_max1d(const double* in, long n, long c, long window, double* out, int64_t* argmax) {
  const long no = n / window;
#pragma omp parallel for if (n * c > kGrain && no > 1) schedule(static)
  for (long ox = 0; ox < no; ++ox) {
    for (long ch = 0; ch < c; ++ch) {
      double best = -1.0;
      int64_t best_idx = -1;
      for (long dx = 0; dx < window; ++dx) {
        const long idx = (ox * window + dx) * c + ch;
        if (best_idx < 0 || in[idx] > best) {
          best = in[idx];
          best_idx = idx;
        }
      }
      const long o = ox * c + ch;
      out[o] = best;
      argmax[o] = best_idx;
    }
  }
}

namespace {
// Align-corners source position; a single-point target samples position 0.
inline void src_coords(long t, long nt, long ns, long* lo, long* hi, double* frac) {
  if (nt <= 1 || ns <= 1) {
    *lo = *hi = 0;
    *frac = 0.0;
    return;
  }
  const double pos = static_cast<double>(t) * static_cast<double>(ns - 1) /
                     static_cast<double>(nt - 1);
  const long fl = std::min(static_cast<long>(pos), ns - 2);
  *lo = fl;
  *hi = fl + 1;
  *frac = pos - static_cast<double>(fl);
}
}  // namespace

void interp_linear1d_serial(const double* in, long n, long c, double* out, long no) {
  for (long ox = 0; ox < no; ++ox) {
    long lo, hi;
    double f;
    src_coords(ox, no, n, &lo, &hi, &f);
    for (long ch = 0; ch < c; ++ch)
      out[ox * c + ch] = (1.0 - f) * in[lo * c + ch] + f * in[hi * c + ch];
  }
}

void interp_linear1d(const double* in, long n, long c, double* out, long no) {
#pragma omp parallel for if (no * c > kGrain && no > 1) schedule(static)
  for (long ox = 0; ox < no; ++ox) {
    long lo, hi;
    double f;
    src_coords(ox, no, n, &lo, &hi, &f);
    for (long ch = 0; ch < c; ++ch)
      out[ox * c + ch] = (1.0 - f) * in[lo * c + ch] + f * in[hi * c + ch];
  }
}

namespace {
inline void bilinear_cell(const double* in, long w, long c, double* out, long wo, long h, long ho,
                          long n_w, long oy, long ox) {
  long y0, y1, x0, x1;
  double fy, fx;
  src_coords(oy, ho, h, &y0, &y1, &fy);
  src_coords(ox, wo, n_w, &x0, &x1, &fx);
  const double w00 = (1.0 - fy) * (1.0 - fx), w01 = (1.0 - fy) * fx;
  const double w10 = fy * (1.0 - fx), w11 = fy * fx;
  double* ocell = out + (oy * wo + ox) * c;
  for (long ch = 0; ch < c; ++ch) {
    ocell[ch] = w00 * in[(y0 * w + x0) * c + ch] + w01 * in[(y0 * w + x1) * c + ch] +
                w10 * in[(y1 * w + x0) * c + ch] + w11 * in[(y1 * w + x1) * c + ch];
  }
}
}  // namespace

void interp_bilinear2d_serial(const double* in, long h, long w, long c, double* out, long ho,
                              long wo) {
  for (long oy = 0; oy < ho; ++oy)
    for (long ox = 0; ox < wo; ++ox) bilinear_cell(in, w, c, out, wo, h, ho, w, oy, ox);
}

void interp_bilinear2d(const double* in, long h, long w, long c, double* out, long ho, long wo) {
#pragma omp parallel for if (ho * wo * c > kGrain && ho > 1) schedule(static)
  for (long oy = 0; oy < ho; ++oy)
    for (long ox = 0; ox < wo; ++ox) bilinear_cell(in, w, c, out, wo, h, ho, w, oy, ox);
}

void interp_linear1d_adjoint(const double* gout, long no, long c, double* gin, long n) {
  for (long ox = 0; ox < no; ++ox) {
    long lo, hi;
    double f;
    src_coords(ox, no, n, &lo, &hi, &f);
    for (long ch = 0; ch < c; ++ch) {
      gin[lo * c + ch] += (1.0 - f) * gout[ox * c + ch];
      gin[hi * c + ch] += f * gout[ox * c + ch];
    }
  }
}

void interp_bilinear2d_adjoint(const double* gout, long ho, long wo, long c, double* gin, long h,
                               long w) {
  for (long oy = 0; oy < ho; ++oy) {
    for (long ox = 0; ox < wo; ++ox) {
      long y0, y1, x0, x1;
      double fy, fx;
      src_coords(oy, ho, h, &y0, &y1, &fy);
      src_coords(ox, wo, w, &x0, &x1, &fx);
      const double w00 = (1.0 - fy) * (1.0 - fx), w01 = (1.0 - fy) * fx;
      const double w10 = fy * (1.0 - fx), w11 = fy * fx;
      const double* gcell = gout + (oy * wo + ox) * c;
      for (long ch = 0; ch < c; ++ch) {
        gin[(y0 * w + x0) * c + ch] += w00 * gcell[ch];
        gin[(y0 * w + x1) * c + ch] += w01 * gcell[ch];
        gin[(y1 * w + x0) * c + ch] += w10 * gcell[ch];
        gin[(y1 * w + x1) * c + ch] += w11 * gcell[ch];
      }
    }
  }
}

void spectral_forward_serial(const double* t, long rows, long d, const double* w0,
                             const double* wsin, const double* wcos, long half_n, double* out) {
  for (long i = 0; i < rows * d; ++i) {
    const double tv = t[i];
    double acc = tv + w0[i % d];
    for (long k = 1; k <= half_n; ++k) {
      const double kt = static_cast<double>(k) * tv;
      acc += wsin[k - 1] * std::sin(kt) + wcos[k - 1] * std::cos(kt);
    }
    out[i] = acc;
  }
}

void spectral_forward(const double* t, long rows, long d, const double* w0, const double* wsin,
                      const double* wcos, long half_n, double* out) {
#pragma omp parallel for if (rows * d * half_n > kGrain && rows * d > 1) schedule(static)
  for (long i = 0; i < rows * d; ++i) {
    const double tv = t[i];
    double acc = tv + w0[i % d];
    for (long k = 1; k <= half_n; ++k) {
      const double kt = static_cast<double>(k) * tv;
      acc += wsin[k - 1] * std::sin(kt) + wcos[k - 1] * std::cos(kt);
    }
    out[i] = acc;
  }
}

void spectral_backward(const double* t, long rows, long d, const double* wsin, const double* wcos,
                       long half_n, const double* gout, double* gt, double* gw0, double* gwsin,
                       double* gwcos) {
#pragma omp parallel for if (rows * d * half_n > kGrain && rows * d > 1) schedule(static)
  for (long i = 0; i < rows * d; ++i) {
    const double tv = t[i];
    double slope = 1.0;
    for (long k = 1; k <= half_n; ++k) {
      const double kt = static_cast<double>(k) * tv;
      slope += static_cast<double>(k) * (wsin[k - 1] * std::cos(kt) - wcos[k - 1] * std::sin(kt));
    }
    gt[i] += gout[i] * slope;
  }
  // Weight gradients are reductions over all elements; fixed order.
  for (long j = 0; j < d; ++j) {
    double acc = 0.0;
    for (long i = 0; i < rows; ++i) acc += gout[i * d + j];
    gw0[j] += acc;
  }
  for (long k = 1; k <= half_n; ++k) {
    double asin = 0.0, acos = 0.0;
    for (long i = 0; i < rows * d; ++i) {
      const double kt = static_cast<double>(k) * t[i];
      asin += gout[i] * std::sin(kt);
      acos += gout[i] * std::cos(kt);
    }
    gwsin[k - 1] += asin;
    gwcos[k - 1] += acos;
  }
}

void grf_eval2d(const double* kx, const double* ky, const double* amp, const double* phase,
                long n_modes, long extent, double* out) {
  const double h = extent > 1 ? 1.0 / static_cast<double>(extent - 1) : 0.0;
  const double two_pi = 2.0 * M_PI;
#pragma omp parallel for if (extent * extent * n_modes > kGrain && extent > 1) schedule(static)
  for (long i = 0; i < extent; ++i) {
    const double x = static_cast<double>(i) * h;
    for (long j = 0; j < extent; ++j) {
      const double y = static_cast<double>(j) * h;
      double acc = 0.0;
      for (long m = 0; m < n_modes; ++m)
        acc += amp[m] * std::cos(two_pi * (kx[m] * x + ky[m] * y) + phase[m]);
      out[i * extent + j] = acc;
    }
  }
}

void grf_eval1d(const double* k, const double* amp, const double* phase, long n_modes,
                long extent, double* out) {
  const double h = extent > 1 ? 1.0 / static_cast<double>(extent - 1) : 0.0;
  const double two_pi = 2.0 * M_PI;
#pragma omp parallel for if (extent * n_modes > kGrain && extent > 1) schedule(static)
  for (long i = 0; i < extent; ++i) {
    const double x = static_cast<double>(i) * h;
    double acc = 0.0;
    for (long m = 0; m < n_modes; ++m) acc += amp[m] * std::cos(two_pi * k[m] * x + phase[m]);
    out[i] = acc;
  }
}

}  // namespace lsm::kernels
