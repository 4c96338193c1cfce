#pragma once

#include <functional>
#include <vector>

#include "lsm/tensor.hpp"

namespace lsm {

// Neural spectral block weights for one scale; N must be even.
struct SpectralParams {
  Tensor w0;     // [d_latent]
  Tensor w_sin;  // [1 x N/2]
  Tensor w_cos;  // [1 x N/2]
  long n_basis = 0;
};

SpectralParams make_spectral_params(long n_basis, long d_latent);

// Per token row T: T + w0 + sum_k (w_sin[k] sin(kT) + w_cos[k] cos(kT)),
// k = 1..N/2, applied elementwise across d_latent. Differentiable in T and
// all weights.
Tensor spectral_forward(const Tensor& t_x, const SpectralParams& params);

// Modular reduction into [-pi, pi]:
// x - sgn(x) * ceil((|x| - pi) / 2pi) * 2pi when |x| > pi, else x.
double normalize_periodic(double x);

using RealFn = std::function<double(double)>;

// g(x) = f(x) - x on [0, pi], reflected evenly onto [-pi, 0) and wrapped
// 2pi-periodically through normalize_periodic.
RealFn extend_even_periodic(RealFn f);

// Normalize-composition of a formula that is already 2pi-periodic.
RealFn periodize(RealFn g);

struct Coefficients1D {
  double a0 = 0.0;
  std::vector<double> a_sin;  // N/2
  std::vector<double> a_cos;  // N/2
};

// Composite-trapezoid quadrature of the closed-form integrals over [-pi, pi]:
// a0 = (1/2pi) int g, a_sin[k] = (1/pi) int g sin(kt), a_cos[k] likewise.
// quad_nodes must be >= 16 * n_basis to resolve the highest mode.
Coefficients1D fourier_coefficients(const RealFn& g_extend, long n_basis, long quad_nodes);

// x + a0 + sum_k (a_sin[k] sin(kx) + a_cos[k] cos(kx)).
double eval_partial_sum(const Coefficients1D& c, double x);

enum class ExtensionMode { even, periodic };

struct ConvergencePoint {
  long n_basis;
  double sup_error;
};

// For each N: extend f - x, integrate coefficients, evaluate the partial sum
// f^N on a uniform grid over [0, pi] and report sup |f - f^N|.
std::vector<ConvergencePoint> convergence_experiment(const RealFn& f,
                                                     const std::vector<long>& n_list,
                                                     long grid_points,
                                                     ExtensionMode mode = ExtensionMode::even,
                                                     long quad_nodes = 10000);

// d_latent = 1 block whose forward equals eval_partial_sum everywhere.
SpectralParams load_coefficients_into_params(const Coefficients1D& c);

}  // namespace lsm
