#include "lsm/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "lsm/kernels.hpp"

namespace lsm {

SpectralParams make_spectral_params(long n_basis, long d_latent) {
  if (n_basis < 2 || n_basis % 2 != 0)
    throw std::invalid_argument("spectral: N must be even and positive, got " +
                                std::to_string(n_basis));
  if (d_latent < 1) throw std::invalid_argument("spectral: d_latent must be positive");
  SpectralParams p;
  p.w0 = Tensor::zeros({d_latent});
  p.w_sin = Tensor::zeros({1, n_basis / 2});
  p.w_cos = Tensor::zeros({1, n_basis / 2});
  p.n_basis = n_basis;
  return p;
}

Tensor spectral_forward(const Tensor& t_x, const SpectralParams& params) {
  if (params.n_basis < 2 || params.n_basis % 2 != 0)
    throw std::invalid_argument("spectral_forward: N must be even and positive");
  if (t_x.shape.size() != 2)
    throw std::invalid_argument("spectral_forward: tokens must be [C x d_latent], got " +
                                shape_str(t_x.shape));
  const long rows = t_x.shape[0], d = t_x.shape[1];
  const long half_n = params.n_basis / 2;
  if (params.w0.size() != d || params.w_sin.size() != half_n || params.w_cos.size() != half_n)
    throw std::invalid_argument("spectral_forward: weight shapes inconsistent with N=" +
                                std::to_string(params.n_basis) + ", d_latent=" +
                                std::to_string(d));

  Tensor res = Tensor::zeros({rows, d});
  kernels::spectral_forward(t_x.data->data(), rows, d, params.w0.data->data(),
                            params.w_sin.data->data(), params.w_cos.data->data(), half_n,
                            res.data->data());

  Tape* tp = Tape::active();
  const bool any = tracked(t_x) || tracked(params.w0) || tracked(params.w_sin) ||
                   tracked(params.w_cos);
  if (tp && any) {
    const int tn = tracked(t_x) ? t_x.node : -1;
    const int w0n = tracked(params.w0) ? params.w0.node : -1;
    const int wsn = tracked(params.w_sin) ? params.w_sin.node : -1;
    const int wcn = tracked(params.w_cos) ? params.w_cos.node : -1;
    auto tdata = t_x.data;
    auto wsin = params.w_sin.data;
    auto wcos = params.w_cos.data;
    res.node = tp->record([tn, w0n, wsn, wcn, rows, d, half_n, tdata, wsin,
                           wcos](const std::vector<double>& g, Tape& t) {
      std::vector<double> gt(static_cast<size_t>(rows * d), 0.0);
      std::vector<double> gw0(static_cast<size_t>(d), 0.0);
      std::vector<double> gws(static_cast<size_t>(half_n), 0.0);
      std::vector<double> gwc(static_cast<size_t>(half_n), 0.0);
      kernels::spectral_backward(tdata->data(), rows, d, wsin->data(), wcos->data(), half_n,
                                 g.data(), gt.data(), gw0.data(), gws.data(), gwc.data());
      auto acc = [&t](int node, const std::vector<double>& src) {
        if (node < 0) return;
        auto& dst = t.grad_buf(node, static_cast<long>(src.size()));
        for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
      };
      acc(tn, gt);
      acc(w0n, gw0);
      acc(wsn, gws);
      acc(wcn, gwc);
    });
    res.tape_id = tp->id();
  }
  return res;
}

double normalize_periodic(double x) {
  const double ax = std::abs(x);
  if (ax <= M_PI) return x;
  const double sgn = x > 0 ? 1.0 : -1.0;
  const double shifted = x - sgn * std::ceil((ax - M_PI) / (2.0 * M_PI)) * 2.0 * M_PI;
  // ceil can land exactly on +-pi; clamp rounding spill.
  return std::min(M_PI, std::max(-M_PI, shifted));
}

RealFn extend_even_periodic(RealFn f) {
  return [f = std::move(f)](double x) {
    const double t = normalize_periodic(x);
    const double u = std::abs(t);  // even reflection
    return f(u) - u;
  };
}

RealFn periodize(RealFn g) {
  return [g = std::move(g)](double x) { return g(normalize_periodic(x)); };
}

Coefficients1D fourier_coefficients(const RealFn& g_extend, long n_basis, long quad_nodes) {
  if (n_basis < 2 || n_basis % 2 != 0)
    throw std::invalid_argument("fourier_coefficients: N must be even and positive");
  if (quad_nodes < 16 * n_basis)
    throw std::invalid_argument("fourier_coefficients: need quad_nodes >= 16*N = " +
                                std::to_string(16 * n_basis) + ", got " +
                                std::to_string(quad_nodes));
  const long m = quad_nodes;  // intervals
  const double h = 2.0 * M_PI / static_cast<double>(m);
  std::vector<double> gv(static_cast<size_t>(m + 1));
  std::vector<double> tv(static_cast<size_t>(m + 1));
  for (long i = 0; i <= m; ++i) {
    tv[static_cast<size_t>(i)] = -M_PI + static_cast<double>(i) * h;
    gv[static_cast<size_t>(i)] = g_extend(tv[static_cast<size_t>(i)]);
  }
  auto trapz = [&](const std::function<double(long)>& integrand) {
    double acc = 0.5 * (integrand(0) + integrand(m));
    for (long i = 1; i < m; ++i) acc += integrand(i);
    return acc * h;
  };
  Coefficients1D c;
  c.a0 = trapz([&](long i) { return gv[static_cast<size_t>(i)]; }) / (2.0 * M_PI);
  const long half_n = n_basis / 2;
  c.a_sin.resize(static_cast<size_t>(half_n));
  c.a_cos.resize(static_cast<size_t>(half_n));
  for (long k = 1; k <= half_n; ++k) {
    const double kk = static_cast<double>(k);
    c.a_sin[static_cast<size_t>(k - 1)] =
        trapz([&](long i) { return gv[static_cast<size_t>(i)] * std::sin(kk * tv[static_cast<size_t>(i)]); }) / M_PI;
    c.a_cos[static_cast<size_t>(k - 1)] =
        trapz([&](long i) { return gv[static_cast<size_t>(i)] * std::cos(kk * tv[static_cast<size_t>(i)]); }) / M_PI;
  }
  return c;
}

double eval_partial_sum(const Coefficients1D& c, double x) {
  double acc = x + c.a0;
  for (size_t k = 1; k <= c.a_sin.size(); ++k) {
    const double kx = static_cast<double>(k) * x;
    acc += c.a_sin[k - 1] * std::sin(kx) + c.a_cos[k - 1] * std::cos(kx);
  }
  return acc;
}

std::vector<ConvergencePoint> convergence_experiment(const RealFn& f,
                                                     const std::vector<long>& n_list,
                                                     long grid_points, ExtensionMode mode,
                                                     long quad_nodes) {
  for (size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1])
      throw std::invalid_argument("convergence_experiment: n_list must be increasing");
  const RealFn g = [&f](double x) { return f(x) - x; };
  const RealFn ext = mode == ExtensionMode::even ? extend_even_periodic(f) : periodize(g);
  std::vector<ConvergencePoint> out;
  out.reserve(n_list.size());
  for (long n : n_list) {
    const Coefficients1D c = fourier_coefficients(ext, n, std::max(quad_nodes, 16 * n));
    double sup = 0.0;
    for (long i = 0; i < grid_points; ++i) {
      const double x = grid_points > 1
                           ? M_PI * static_cast<double>(i) / static_cast<double>(grid_points - 1)
                           : 0.0;
      sup = std::max(sup, std::abs(f(x) - eval_partial_sum(c, x)));
    }
    out.push_back({n, sup});
  }
  return out;
}

SpectralParams load_coefficients_into_params(const Coefficients1D& c) {
  if (c.a_sin.size() != c.a_cos.size() || c.a_sin.empty())
    throw std::invalid_argument("load_coefficients_into_params: a_sin/a_cos length mismatch");
  const long half_n = static_cast<long>(c.a_sin.size());
  SpectralParams p = make_spectral_params(2 * half_n, 1);
  (*p.w0.data)[0] = c.a0;
  *p.w_sin.data = c.a_sin;
  *p.w_cos.data = c.a_cos;
  return p;
}

}  // namespace lsm
