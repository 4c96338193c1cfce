#include "lsm/pde_data.hpp"

#include <cmath>
#include <stdexcept>

#include "lsm/binio.hpp"
#include "lsm/kernels.hpp"

namespace lsm {

GridField sample_grf(long extent, long n_modes, double length_scale, std::mt19937_64& rng,
                     long rank) {
  if (extent < 8) throw std::invalid_argument("sample_grf: extent must be >= 8");
  if (n_modes < 1) throw std::invalid_argument("sample_grf: n_modes must be >= 1");
  if (rank != 1 && rank != 2) throw std::invalid_argument("sample_grf: rank must be 1 or 2");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * M_PI);
  std::vector<double> kx, ky, amp, phase;
  if (rank == 2) {
    for (long k1 = -n_modes; k1 <= n_modes; ++k1) {
      for (long k2 = -n_modes; k2 <= n_modes; ++k2) {
        if (k1 == 0 && k2 == 0) continue;
        const double k2norm = static_cast<double>(k1 * k1 + k2 * k2);
        kx.push_back(static_cast<double>(k1));
        ky.push_back(static_cast<double>(k2));
        amp.push_back(normal(rng) * std::pow(1.0 + k2norm, -length_scale));
        phase.push_back(uniform(rng));
      }
    }
  } else {
    for (long k1 = -n_modes; k1 <= n_modes; ++k1) {
      if (k1 == 0) continue;
      kx.push_back(static_cast<double>(k1));
      amp.push_back(normal(rng) * std::pow(1.0 + static_cast<double>(k1 * k1), -length_scale));
      phase.push_back(uniform(rng));
    }
  }
  if (rank == 2) {
    GridField f = GridField::zeros({extent, extent}, 1);
    kernels::grf_eval2d(kx.data(), ky.data(), amp.data(), phase.data(),
                        static_cast<long>(amp.size()), extent, f.values.data->data());
    return f;
  }
  GridField f = GridField::zeros({extent}, 1);
  kernels::grf_eval1d(kx.data(), amp.data(), phase.data(), static_cast<long>(amp.size()), extent,
                      f.values.data->data());
  return f;
}

GridField make_darcy_coefficient(const GridField& psi, double a_low, double a_high) {
  if (!(a_high > a_low && a_low > 0.0))
    throw std::invalid_argument("make_darcy_coefficient: need a_high > a_low > 0 (ellipticity)");
  GridField a = GridField::zeros(psi.extents, 1);
  const auto& in = *psi.values.data;
  auto& out = *a.values.data;
  for (size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= 0.0 ? a_high : a_low;
  return a;
}

double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

namespace {

// Matrix-free 5-point operator on the (n-2)^2 interior unknowns.
struct DarcyOperator {
  const std::vector<double>& a;
  long n;
  double inv_h2;

  double face(long i1, long j1, long i2, long j2) const {
    return harmonic_mean(a[static_cast<size_t>(i1 * n + j1)],
                         a[static_cast<size_t>(i2 * n + j2)]);
  }

  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    const long m = n - 2;
    for (long i = 1; i <= m; ++i) {
      for (long j = 1; j <= m; ++j) {
        const double aN = face(i, j, i - 1, j), aS = face(i, j, i + 1, j);
        const double aW = face(i, j, i, j - 1), aE = face(i, j, i, j + 1);
        const double uc = u[static_cast<size_t>((i - 1) * m + (j - 1))];
        const double uN = i > 1 ? u[static_cast<size_t>((i - 2) * m + (j - 1))] : 0.0;
        const double uS = i < m ? u[static_cast<size_t>(i * m + (j - 1))] : 0.0;
        const double uW = j > 1 ? u[static_cast<size_t>((i - 1) * m + (j - 2))] : 0.0;
        const double uE = j < m ? u[static_cast<size_t>((i - 1) * m + j)] : 0.0;
        out[static_cast<size_t>((i - 1) * m + (j - 1))] =
            inv_h2 * ((aN + aS + aW + aE) * uc - aN * uN - aS * uS - aW * uW - aE * uE);
      }
    }
  }

  void diagonal(std::vector<double>& d) const {
    const long m = n - 2;
    for (long i = 1; i <= m; ++i)
      for (long j = 1; j <= m; ++j)
        d[static_cast<size_t>((i - 1) * m + (j - 1))] =
            inv_h2 * (face(i, j, i - 1, j) + face(i, j, i + 1, j) + face(i, j, i, j - 1) +
                      face(i, j, i, j + 1));
  }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

GridField solve_darcy_field(const GridField& a, const GridField& f, DarcySolveInfo* info) {
  if (a.rank() != 2 || a.extents[0] != a.extents[1] || a.channels != 1)
    throw std::invalid_argument("solve_darcy: coefficient must be a square 1-channel field");
  if (f.extents != a.extents)
    throw std::invalid_argument("solve_darcy: forcing extents differ from coefficient");
  for (double v : *a.values.data)
    if (!(v > 0.0)) throw std::invalid_argument("solve_darcy: coefficient must be positive");
  const long n = a.extents[0];
  const long m = n - 2;
  const double h = 1.0 / static_cast<double>(n - 1);
  DarcyOperator op{*a.values.data, n, 1.0 / (h * h)};

  std::vector<double> b(static_cast<size_t>(m * m));
  for (long i = 1; i <= m; ++i)
    for (long j = 1; j <= m; ++j)
      b[static_cast<size_t>((i - 1) * m + (j - 1))] =
          (*f.values.data)[static_cast<size_t>(i * n + j)];

  const double b_norm = std::sqrt(dot(b, b));
  std::vector<double> u(b.size(), 0.0);
  GridField result = GridField::zeros(a.extents, 1);
  auto emit = [&]() {
    auto& out = *result.values.data;
    for (long i = 1; i <= m; ++i)
      for (long j = 1; j <= m; ++j)
        out[static_cast<size_t>(i * n + j)] = u[static_cast<size_t>((i - 1) * m + (j - 1))];
    return result;
  };
  if (b_norm == 0.0) {
    if (info) *info = {0, 0.0};
    return emit();  // homogeneous problem
  }

  std::vector<double> diag(b.size());
  op.diagonal(diag);
  std::vector<double> r = b, z(b.size()), p(b.size()), ap(b.size());
  for (size_t i = 0; i < z.size(); ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = dot(r, z);
  const double tol = 1e-8;
  const long max_iters = 10 * n * n;
  long it = 0;
  double rel = 1.0;
  while (it < max_iters) {
    op.apply(p, ap);
    const double alpha = rz / dot(p, ap);
    for (size_t i = 0; i < u.size(); ++i) u[i] += alpha * p[i];
    for (size_t i = 0; i < r.size(); ++i) r[i] -= alpha * ap[i];
    ++it;
    rel = std::sqrt(dot(r, r)) / b_norm;
    if (rel <= tol) {
      // Recursion residual met; confirm against the true residual.
      op.apply(u, ap);
      for (size_t i = 0; i < r.size(); ++i) r[i] = b[i] - ap[i];
      rel = std::sqrt(dot(r, r)) / b_norm;
      if (rel <= tol) break;
    }
    for (size_t i = 0; i < z.size(); ++i) z[i] = r[i] / diag[i];
    const double rz_next = dot(r, z);
    for (size_t i = 0; i < p.size(); ++i) p[i] = z[i] + (rz_next / rz) * p[i];
    rz = rz_next;
  }
  if (rel > tol)
    throw std::runtime_error("solve_darcy: CG did not reach relative residual 1e-8 within " +
                             std::to_string(max_iters) + " iterations (final " +
                             std::to_string(rel) + ")");
  if (info) *info = {it, rel};
  return emit();
}

GridField solve_darcy(const GridField& a, double f_const, DarcySolveInfo* info) {
  GridField f = GridField::zeros(a.extents, 1);
  for (auto& v : *f.values.data) v = f_const;
  return solve_darcy_field(a, f, info);
}

long burgers_min_steps(const GridField& u0, double nu, double t_final) {
  const long n = u0.extents[0];
  const double h = 1.0 / static_cast<double>(n);
  double umax = 0.0;
  for (double v : *u0.values.data) umax = std::max(umax, std::abs(v));
  double dt_max = h * h / (2.0 * nu);
  if (umax > 0.0) dt_max = std::min(dt_max, h / umax);
  return static_cast<long>(std::ceil(t_final / (0.9 * dt_max)));
}

GridField solve_burgers1d(const GridField& u0, double nu, double t_final, long steps) {
  if (u0.rank() != 1 || u0.channels != 1)
    throw std::invalid_argument("solve_burgers1d: initial condition must be a rank-1 1-channel field");
  if (!(nu > 0.0)) throw std::invalid_argument("solve_burgers1d: nu must be positive");
  if (steps < 1) throw std::invalid_argument("solve_burgers1d: steps must be >= 1");
  const long n = u0.extents[0];
  const double h = 1.0 / static_cast<double>(n);
  const double dt = t_final / static_cast<double>(steps);
  double umax = 0.0;
  for (double v : *u0.values.data) umax = std::max(umax, std::abs(v));
  if (dt > h * h / (2.0 * nu) || (umax > 0.0 && dt > h / umax))
    throw std::invalid_argument("solve_burgers1d: CFL violation, need at least " +
                                std::to_string(burgers_min_steps(u0, nu, t_final)) + " steps");

  std::vector<double> u = *u0.values.data;
  std::vector<double> flux(static_cast<size_t>(n));
  std::vector<double> next(static_cast<size_t>(n));
  const double lam = dt / h;
  const double dif = nu * dt / (h * h);
  for (long s = 0; s < steps; ++s) {
    for (long i = 0; i < n; ++i) {
      const double ul = u[static_cast<size_t>(i)];
      const double ur = u[static_cast<size_t>((i + 1) % n)];
      // Godunov flux for f(u) = u^2/2, upwind by the face mean.
      flux[static_cast<size_t>(i)] = 0.5 * ((ul + ur) >= 0.0 ? ul * ul : ur * ur);
    }
    for (long i = 0; i < n; ++i) {
      const double fm = flux[static_cast<size_t>((i + n - 1) % n)];
      const double fp = flux[static_cast<size_t>(i)];
      const double um = u[static_cast<size_t>((i + n - 1) % n)];
      const double up = u[static_cast<size_t>((i + 1) % n)];
      next[static_cast<size_t>(i)] =
          u[static_cast<size_t>(i)] - lam * (fp - fm) + dif * (up - 2.0 * u[static_cast<size_t>(i)] + um);
    }
    u.swap(next);
  }
  GridField out = GridField::zeros({n}, 1);
  *out.values.data = std::move(u);
  return out;
}

nlohmann::json GeneratorParams::to_json() const {
  return {{"n_modes", n_modes},     {"length_scale", length_scale}, {"a_low", a_low},
          {"a_high", a_high},       {"forcing", forcing},           {"nu", nu},
          {"t_final", t_final},     {"amplitude", amplitude}};
}

GeneratorParams GeneratorParams::from_json(const nlohmann::json& j) {
  GeneratorParams g;
  g.n_modes = j.value("n_modes", g.n_modes);
  g.length_scale = j.value("length_scale", g.length_scale);
  g.a_low = j.value("a_low", g.a_low);
  g.a_high = j.value("a_high", g.a_high);
  g.forcing = j.value("forcing", g.forcing);
  g.nu = j.value("nu", g.nu);
  g.t_final = j.value("t_final", g.t_final);
  g.amplitude = j.value("amplitude", g.amplitude);
  return g;
}

Dataset make_dataset(const std::string& pde_family, long n_samples, long extent, uint64_t seed,
                     const GeneratorParams& gen) {
  if (n_samples < 1) throw std::invalid_argument("make_dataset: n_samples must be >= 1");
  if (pde_family != "darcy" && pde_family != "burgers")
    throw std::invalid_argument("make_dataset: unsupported pde \"" + pde_family + "\"");
  Dataset d;
  d.inputs.resize(static_cast<size_t>(n_samples));
  d.outputs.resize(static_cast<size_t>(n_samples));
  const bool darcy = pde_family == "darcy";
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n_samples; ++i) {
    std::mt19937_64 rng(seed + static_cast<uint64_t>(i));
    if (darcy) {
      const GridField psi = sample_grf(extent, gen.n_modes, gen.length_scale, rng, 2);
      GridField a = make_darcy_coefficient(psi, gen.a_low, gen.a_high);
      GridField u = solve_darcy(a, gen.forcing);
      d.inputs[static_cast<size_t>(i)] = std::move(a);
      d.outputs[static_cast<size_t>(i)] = std::move(u);
    } else {
      GridField u0 = sample_grf(extent, gen.n_modes, gen.length_scale, rng, 1);
      for (auto& v : *u0.values.data) v *= gen.amplitude;
      GridField ut = solve_burgers1d(u0, gen.nu, gen.t_final,
                                     burgers_min_steps(u0, gen.nu, gen.t_final));
      d.inputs[static_cast<size_t>(i)] = std::move(u0);
      d.outputs[static_cast<size_t>(i)] = std::move(ut);
    }
  }
  d.meta.pde_family = pde_family;
  d.meta.resolution = extent;
  d.meta.seed = seed;
  d.meta.generator = gen.to_json();
  d.meta.n_samples = n_samples;
  return d;
}

namespace {
void channel_stats(const std::vector<GridField>& fields, std::vector<double>& mean,
                   std::vector<double>& stdev) {
  const long c = fields[0].channels;
  mean.assign(static_cast<size_t>(c), 0.0);
  stdev.assign(static_cast<size_t>(c), 0.0);
  long count = 0;
  for (const auto& f : fields) {
    const auto& v = *f.values.data;
    for (size_t i = 0; i < v.size(); ++i) mean[i % static_cast<size_t>(c)] += v[i];
    count += f.coord_count();
  }
  for (auto& m : mean) m /= static_cast<double>(count);
  for (const auto& f : fields) {
    const auto& v = *f.values.data;
    for (size_t i = 0; i < v.size(); ++i) {
      const double dlt = v[i] - mean[i % static_cast<size_t>(c)];
      stdev[i % static_cast<size_t>(c)] += dlt * dlt;
    }
  }
  for (auto& s : stdev) s = std::max(std::sqrt(s / static_cast<double>(count)), 1e-12);
}
}  // namespace

void compute_standardization(Dataset& d) {
  if (d.inputs.empty()) throw std::invalid_argument("compute_standardization: empty dataset");
  channel_stats(d.inputs, d.meta.input_mean, d.meta.input_std);
  channel_stats(d.outputs, d.meta.output_mean, d.meta.output_std);
}

void write_dataset(const Dataset& d, const std::string& path) {
  if (d.inputs.size() != d.outputs.size() || d.inputs.empty())
    throw std::invalid_argument("write_dataset: need equal, nonzero input/output counts");
  const auto& ext = d.inputs[0].extents;
  for (const auto& f : d.inputs)
    if (f.extents != ext) throw std::invalid_argument("write_dataset: extents differ across samples");
  for (const auto& f : d.outputs)
    if (f.extents != ext) throw std::invalid_argument("write_dataset: extents differ across samples");

  binio::Writer w(path);
  w.magic("LSMD");
  w.u32(1);
  w.u32(static_cast<uint32_t>(d.inputs.size()));
  w.u8(static_cast<uint8_t>(ext.size()));
  for (long e : ext) w.u64(static_cast<uint64_t>(e));
  w.u32(static_cast<uint32_t>(d.inputs[0].channels));
  w.u32(static_cast<uint32_t>(d.outputs[0].channels));
  nlohmann::json meta = {{"pde_family", d.meta.pde_family}, {"resolution", d.meta.resolution},
                         {"seed", d.meta.seed},             {"generator", d.meta.generator},
                         {"n_samples", d.meta.n_samples},   {"input_mean", d.meta.input_mean},
                         {"input_std", d.meta.input_std},   {"output_mean", d.meta.output_mean},
                         {"output_std", d.meta.output_std}};
  w.str(meta.dump());
  for (size_t i = 0; i < d.inputs.size(); ++i) {
    w.f64_array(*d.inputs[i].values.data);
    w.f64_array(*d.outputs[i].values.data);
  }
  w.close();
}

Dataset read_dataset(const std::string& path) {
  binio::Reader r(path);
  r.magic("LSMD");
  const uint32_t version = r.u32();
  if (version != 1)
    throw std::runtime_error(path + ": unsupported dataset version " + std::to_string(version) +
                             " at byte " + std::to_string(r.offset()));
  const uint32_t count = r.u32();
  const uint8_t rank = r.u8();
  if (rank != 1 && rank != 2)
    throw std::runtime_error(path + ": bad spatial rank " + std::to_string(rank) + " at byte " +
                             std::to_string(r.offset()));
  std::vector<long> ext(rank);
  for (auto& e : ext) e = static_cast<long>(r.u64());
  const long ci = static_cast<long>(r.u32());
  const long co = static_cast<long>(r.u32());
  const nlohmann::json meta = nlohmann::json::parse(r.str());

  Dataset d;
  d.meta.pde_family = meta.value("pde_family", std::string());
  d.meta.resolution = meta.value("resolution", 0L);
  d.meta.seed = meta.value("seed", static_cast<uint64_t>(0));
  d.meta.generator = meta.value("generator", nlohmann::json::object());
  d.meta.n_samples = meta.value("n_samples", static_cast<long>(count));
  d.meta.input_mean = meta.value("input_mean", std::vector<double>{});
  d.meta.input_std = meta.value("input_std", std::vector<double>{});
  d.meta.output_mean = meta.value("output_mean", std::vector<double>{});
  d.meta.output_std = meta.value("output_std", std::vector<double>{});

  long n_coords = 1;
  for (long e : ext) n_coords *= e;
  for (uint32_t i = 0; i < count; ++i) {
    GridField in = GridField::zeros(ext, ci);
    r.f64_array(*in.values.data, static_cast<size_t>(n_coords * ci));
    GridField out = GridField::zeros(ext, co);
    r.f64_array(*out.values.data, static_cast<size_t>(n_coords * co));
    d.inputs.push_back(std::move(in));
    d.outputs.push_back(std::move(out));
  }
  return d;
}

}  // namespace lsm
