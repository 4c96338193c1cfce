// Compares the serial reference kernels against their OpenMP twins: checks
// bitwise agreement, then reports median wall times and speedup as CSV.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include "lsm/kernels.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double median_seconds(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  fn();  // warm-up
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

std::vector<double> random_vec(size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

struct Row {
  const char* kernel;
  long size;
  double serial_s;
  double parallel_s;
  bool equal;
};

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("LSM_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) omp_set_num_threads(static_cast<int>(n));
  }
  const int reps = argc > 1 ? std::atoi(argv[1]) : 7;
  std::mt19937_64 rng(0);
  std::vector<Row> rows;

  for (long n : {128L, 256L, 384L}) {
    const auto a = random_vec(static_cast<size_t>(n * n), rng);
    const auto b = random_vec(static_cast<size_t>(n * n), rng);
    std::vector<double> y1(static_cast<size_t>(n * n)), y2(y1.size());
    const double ts = median_seconds(
        [&] { lsm::kernels::matmul_nn_serial(a.data(), b.data(), y1.data(), n, n, n); }, reps);
    const double tp = median_seconds(
        [&] { lsm::kernels::matmul_nn(a.data(), b.data(), y2.data(), n, n, n); }, reps);
    rows.push_back({"matmul_nn", n, ts, tp, y1 == y2});
  }

  for (long h : {64L, 128L}) {
    const long ci = 16, co = 16;
    const auto in = random_vec(static_cast<size_t>(h * h * ci), rng);
    const auto ker = random_vec(static_cast<size_t>(3 * 3 * ci * co), rng);
    std::vector<double> y1(static_cast<size_t>(h * h * co)), y2(y1.size());
    const double ts = median_seconds(
        [&] {
          lsm::kernels::conv2d_serial(in.data(), h, h, ci, ker.data(), 3, 3, co, 1, 1, y1.data(),
                                      h, h);
        },
        reps);
    const double tp = median_seconds(
        [&] {
          lsm::kernels::conv2d(in.data(), h, h, ci, ker.data(), 3, 3, co, 1, 1, y2.data(), h, h);
        },
        reps);
    rows.push_back({"conv2d_3x3", h, ts, tp, y1 == y2});
  }

  {
    const long m = 4096, n = 512;
    const auto x = random_vec(static_cast<size_t>(m * n), rng);
    std::vector<double> y1(static_cast<size_t>(m * n)), y2(y1.size());
    const double ts = median_seconds(
        [&] { lsm::kernels::softmax_rows_serial(x.data(), y1.data(), m, n); }, reps);
    const double tp =
        median_seconds([&] { lsm::kernels::softmax_rows(x.data(), y2.data(), m, n); }, reps);
    rows.push_back({"softmax_rows", m, ts, tp, y1 == y2});
  }

  {
    const long rows_n = 4096, d = 64, half_n = 12;
    const auto t = random_vec(static_cast<size_t>(rows_n * d), rng);
    const auto w0 = random_vec(static_cast<size_t>(d), rng);
    const auto ws = random_vec(static_cast<size_t>(half_n), rng);
    const auto wc = random_vec(static_cast<size_t>(half_n), rng);
    std::vector<double> y1(static_cast<size_t>(rows_n * d)), y2(y1.size());
    const double ts = median_seconds(
        [&] {
          lsm::kernels::spectral_forward_serial(t.data(), rows_n, d, w0.data(), ws.data(),
                                                wc.data(), half_n, y1.data());
        },
        reps);
    const double tp = median_seconds(
        [&] {
          lsm::kernels::spectral_forward(t.data(), rows_n, d, w0.data(), ws.data(), wc.data(),
                                         half_n, y2.data());
        },
        reps);
    rows.push_back({"spectral_forward", rows_n, ts, tp, y1 == y2});
  }

  std::cout << "kernel,size,serial_seconds,parallel_seconds,speedup,bitwise_equal\n";
  bool all_equal = true;
  for (const auto& r : rows) {
    all_equal = all_equal && r.equal;
    std::cout << r.kernel << "," << r.size << "," << std::scientific << r.serial_s << ","
              << r.parallel_s << "," << std::defaultfloat << (r.serial_s / r.parallel_s) << ","
              << (r.equal ? "yes" : "NO") << "\n";
  }
  std::cerr << "threads: " << omp_get_max_threads() << "\n";
  return all_equal ? 0 : 1;
}
