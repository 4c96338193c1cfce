#include <doctest.h>

#include <cmath>
#include <random>

#include "lsm/spectral.hpp"

using namespace lsm;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Brute-force modular reduction: shift by 2*pi until inside [-pi, pi].
double normalize_oracle(double x) {
  while (x > M_PI) x -= 2.0 * M_PI;
  while (x < -M_PI) x += 2.0 * M_PI;
  return x;
}

}  // namespace

TEST_CASE("spectral_forward zero weights is the identity") {
  std::mt19937_64 rng(1);
  const Tensor t = random_tensor({3, 5}, rng);
  const SpectralParams p = make_spectral_params(8, 5);
  const Tensor out = spectral_forward(t, p);
  CHECK(out.vals() == t.vals());
}

TEST_CASE("spectral_forward direct evaluation") {
  SpectralParams p = make_spectral_params(4, 1);
  (*p.w_sin.data)[0] = 1.0;  // only the sin(T) term
  const Tensor out = spectral_forward(Tensor({1, 1}, {M_PI / 2}), p);
  CHECK(out.item() == doctest::Approx(M_PI / 2 + 1.0).epsilon(1e-14));
}

TEST_CASE("spectral params reject odd N") {
  CHECK_THROWS_AS(make_spectral_params(7, 3), std::invalid_argument);
  CHECK_THROWS_AS(make_spectral_params(0, 3), std::invalid_argument);
}

TEST_CASE("non-residual part is 2pi periodic") {
  std::mt19937_64 rng(2);
  SpectralParams p = make_spectral_params(24, 4);
  p.w0 = random_tensor({4}, rng);
  p.w_sin = random_tensor({1, 12}, rng);
  p.w_cos = random_tensor({1, 12}, rng);
  const Tensor t = random_tensor({3, 4}, rng);
  std::vector<double> sv = t.vals();
  for (auto& v : sv) v += 2.0 * M_PI;
  const Tensor shifted(t.shape, std::move(sv));
  const Tensor a = spectral_forward(t, p);
  const Tensor b = spectral_forward(shifted, p);
  for (long i = 0; i < t.size(); ++i)
    CHECK(std::abs((b.vals()[i] - shifted.vals()[i]) - (a.vals()[i] - t.vals()[i])) < 1e-10);
}

TEST_CASE("normalize_periodic") {
  CHECK(normalize_periodic(0.5) == 0.5);
  CHECK(normalize_periodic(3.0 * M_PI / 2.0) == doctest::Approx(-M_PI / 2.0).epsilon(1e-14));
  CHECK(normalize_periodic(-5.0 * M_PI) == doctest::Approx(-M_PI).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-100.0, 100.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = dist(rng);
    const double n = normalize_periodic(x);
    CHECK(n >= -M_PI);
    CHECK(n <= M_PI);
    CHECK(std::abs(n - normalize_oracle(x)) < 1e-9);
    const double cycles = (x - n) / (2.0 * M_PI);
    CHECK(std::abs(cycles - std::round(cycles)) < 1e-9);
  }
}

TEST_CASE("even periodic extension") {
  // f(x) = x has zero residual everywhere.
  const RealFn id_ext = extend_even_periodic([](double x) { return x; });
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(-20.0, 20.0);
  for (int i = 0; i < 1001; ++i) CHECK(std::abs(id_ext(dist(rng))) < 1e-12);

  const RealFn g = extend_even_periodic([](double x) { return std::abs(x - 1.0) + 0.2 * x * x; });
  for (int i = 0; i < 1001; ++i) {
    const double x = dist(rng);
    CHECK(std::abs(g(x) - g(-x)) < 1e-12);
    CHECK(std::abs(g(x + 2.0 * M_PI) - g(x)) < 1e-12);
  }
}

TEST_CASE("fourier_coefficients") {
  const RealFn zero = [](double) { return 0.0; };
  const Coefficients1D c0 = fourier_coefficients(zero, 8, 1000);
  CHECK(c0.a0 == 0.0);
  for (double v : c0.a_sin) CHECK(v == 0.0);
  for (double v : c0.a_cos) CHECK(v == 0.0);

  const RealFn cos2 = [](double t) { return std::cos(2.0 * t); };
  const Coefficients1D c2 = fourier_coefficients(cos2, 8, 10000);
  CHECK(std::abs(c2.a_cos[1] - 1.0) < 1e-9);
  CHECK(std::abs(c2.a0) < 1e-9);
  for (size_t k = 0; k < c2.a_cos.size(); ++k)
    if (k != 1) CHECK(std::abs(c2.a_cos[k]) < 1e-9);
  for (double v : c2.a_sin) CHECK(std::abs(v) < 1e-9);

  // Even integrand: every sine coefficient vanishes (odd integrand over a
  // symmetric interval).
  const RealFn even = [](double t) { return std::abs(t) + 0.3 * std::cos(3.0 * t); };
  const Coefficients1D ce = fourier_coefficients(even, 16, 10000);
  for (double v : ce.a_sin) CHECK(std::abs(v) < 1e-9);

  CHECK_THROWS_WITH_AS(fourier_coefficients(zero, 8, 100), doctest::Contains("quad_nodes"),
                       std::invalid_argument);
}

TEST_CASE("convergence_experiment: identity target is quadrature-exact") {
  const auto pts = convergence_experiment([](double x) { return x; }, {8, 16, 32}, 1001);
  for (const auto& p : pts) CHECK(p.sup_error < 1e-9);
}

TEST_CASE("convergence_experiment: finite trig polynomial is exact for N >= 6") {
  const RealFn f = [](double x) {
    return x + 0.3 + 0.5 * std::sin(2.0 * x) - 0.2 * std::cos(3.0 * x);
  };
  const auto pts =
      convergence_experiment(f, {6, 8, 16}, 1001, ExtensionMode::periodic, 10000);
  for (const auto& p : pts) CHECK(p.sup_error < 1e-6);
}

TEST_CASE("convergence_experiment: |x - pi/2| rate tracks ln N / N") {
  const RealFn f = [](double x) { return std::abs(x - M_PI / 2.0); };
  const auto pts = convergence_experiment(f, {8, 16, 32, 64, 128}, 1001);
  for (size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].sup_error <= pts[i - 1].sup_error);
  CHECK(pts[3].sup_error < pts[0].sup_error / 4.0);  // E(64) < E(8)/4
  const double base = pts[0].sup_error * 8.0 / std::log(8.0);
  for (const auto& p : pts) {
    const double scaled = p.sup_error * static_cast<double>(p.n_basis) /
                          std::log(static_cast<double>(p.n_basis));
    CHECK(scaled < 4.0 * base);
    CHECK(scaled > base / 4.0);
  }
}

TEST_CASE("load_coefficients_into_params") {
  // Zero coefficients: identity block.
  Coefficients1D zero;
  zero.a_sin.assign(4, 0.0);
  zero.a_cos.assign(4, 0.0);
  const SpectralParams pz = load_coefficients_into_params(zero);
  std::mt19937_64 rng(5);
  const Tensor t = random_tensor({4, 1}, rng);
  CHECK(spectral_forward(t, pz).vals() == t.vals());

  // Coefficients from the trig polynomial reproduce f through the block.
  const RealFn f = [](double x) {
    return x + 0.3 + 0.5 * std::sin(2.0 * x) - 0.2 * std::cos(3.0 * x);
  };
  const RealFn g = periodize([&f](double x) { return f(x) - x; });
  const Coefficients1D c = fourier_coefficients(g, 8, 10000);
  const SpectralParams p = load_coefficients_into_params(c);
  for (int i = 0; i <= 100; ++i) {
    const double x = M_PI * i / 100.0;
    const Tensor out = spectral_forward(Tensor({1, 1}, {x}), p);
    CHECK(std::abs(out.item() - f(x)) < 1e-6);
    // Block and direct partial sum are two routes to the same value.
    CHECK(std::abs(out.item() - eval_partial_sum(c, x)) < 1e-12);
  }
}

TEST_CASE("spectral_forward is differentiable in tokens and weights") {
  std::mt19937_64 rng(6);
  auto builder = [](std::vector<Tensor>& p) {
    SpectralParams sp;
    sp.w0 = p[1];
    sp.w_sin = p[2];
    sp.w_cos = p[3];
    sp.n_basis = 2 * p[2].shape[1];
    const Tensor out = spectral_forward(p[0], sp);
    return sum_all(mul(out, out));
  };
  const GradcheckReport rep = gradcheck(
      builder,
      {random_tensor({3, 4}, rng), random_tensor({4}, rng), random_tensor({1, 3}, rng),
       random_tensor({1, 3}, rng)},
      1e-6);
  CHECK(rep.finite);
  CHECK(rep.max_rel_err < 1e-5);
}
