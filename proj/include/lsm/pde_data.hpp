#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsm/grid.hpp"

namespace lsm {

struct DatasetMeta {
  std::string pde_family;
  long resolution = 0;
  uint64_t seed = 0;
  nlohmann::json generator;
  long n_samples = 0;
  // Per-channel standardization stats of the train split; empty when raw.
  std::vector<double> input_mean, input_std, output_mean, output_std;
};

struct Dataset {
  std::vector<GridField> inputs;
  std::vector<GridField> outputs;
  DatasetMeta meta;
};

// Random Fourier series with sigma_k = (1 + |k|^2)^(-length_scale), standard
// normal amplitudes, uniform phases; no k=0 term, so zero mean by
// construction. Deterministic given the generator state.
GridField sample_grf(long extent, long n_modes, double length_scale, std::mt19937_64& rng,
                     long rank = 2);

// Two-phase coefficient: a_high where psi >= 0, else a_low.
GridField make_darcy_coefficient(const GridField& psi, double a_low = 3.0, double a_high = 12.0);

struct DarcySolveInfo {
  long iterations = 0;
  double rel_residual = 0.0;
};

// -div(a grad u) = f on the unit box, u = 0 on the boundary. Finite-volume
// 5-point stencil with harmonic face averaging, solved by Jacobi-
// preconditioned CG to relative residual 1e-8 (single-threaded).
GridField solve_darcy(const GridField& a, double f_const, DarcySolveInfo* info = nullptr);
GridField solve_darcy_field(const GridField& a, const GridField& f,
                            DarcySolveInfo* info = nullptr);

// Harmonic interface mean used at control-volume faces.
double harmonic_mean(double a, double b);

// Viscous Burgers u_t + u u_x = nu u_xx on the periodic unit interval
// (h = 1/extent), conservative Godunov upwind flux + central diffusion.
// Rejects CFL-violating step counts, naming the required count.
GridField solve_burgers1d(const GridField& u0, double nu, double t_final, long steps);
long burgers_min_steps(const GridField& u0, double nu, double t_final);

struct GeneratorParams {
  long n_modes = 8;
  double length_scale = 2.0;
  double a_low = 3.0;      // darcy
  double a_high = 12.0;    // darcy
  double forcing = 1.0;    // darcy
  double nu = 0.01;        // burgers
  double t_final = 0.5;    // burgers
  double amplitude = 0.5;  // burgers initial-condition scale

  nlohmann::json to_json() const;
  static GeneratorParams from_json(const nlohmann::json& j);
};

// n_samples (input, output) pairs with per-sample seeds seed+i; samples
// generate in parallel, each one serial and deterministic.
Dataset make_dataset(const std::string& pde_family, long n_samples, long extent, uint64_t seed,
                     const GeneratorParams& gen = {});

// Fills meta stats (per channel, over this dataset's samples).
void compute_standardization(Dataset& d);

// File format: magic "LSMD", u32 version=1, u32 sample count, u8 spatial
// rank, u64 extents, u32 in/out channels, length-prefixed JSON meta, then per
// sample the input and output payloads as f64 little-endian row-major.
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace lsm
