#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsm/grid.hpp"
#include "lsm/projection.hpp"
#include "lsm/spectral.hpp"

namespace lsm {

enum class ProjectorKind { attention, conv, avgpool };

struct AblationToggles {
  bool use_spectral = true;
  bool use_patchify = true;
  bool use_projector = true;
  bool single_scale = false;
  ProjectorKind projector_kind = ProjectorKind::attention;
  bool normalize_latent = false;  // affine rescale of latent tokens to [0, pi]
};

struct LsmConfig {
  long c_tokens = 4;
  long n_basis = 24;
  long k_scales = 5;
  std::vector<long> d_model = {32, 64, 128, 128, 128};
  std::vector<long> d_latent = {32, 64, 128, 128, 128};
  std::vector<long> patches = {256, 64, 16, 4, 1};
  double downsample_ratio = 0.5;
  long d_x = 1;
  long d_y = 1;
  long spatial_rank = 2;
  // Append the coordinate grid as extra input channels (the usual protocol
  // for boundary-anchored operators on regular grids).
  bool append_coords = true;
  AblationToggles ablation;

  void validate() const;
  long effective_scales() const { return ablation.single_scale ? 1 : k_scales; }
  long patch_count(long scale) const;        // honors use_patchify / single_scale
  long patch_grid_extent(long scale) const;  // per-axis tile grid
  bool needs_coord_conv() const {
    return !ablation.use_projector || ablation.projector_kind == ProjectorKind::conv;
  }
};

nlohmann::json config_to_json(const LsmConfig& cfg);
LsmConfig config_from_json(const nlohmann::json& j);

// Strict parsing guard: silent default fallbacks on typo'd keys are the main
// reproducibility hazard in training configs.
void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& context);

struct ScaleParams {
  LatentTokenSet tokens;
  ProjectorParams proj;
  SpectralParams spec;
  Tensor coord_conv;  // [3,(3,)dm,dm]; allocated only when the config needs it
};

struct ModelParams {
  Tensor embed;    // [d_x x d_model[0]]
  Tensor readout;  // [d_model[0] x d_y]
  std::vector<ScaleParams> scales;
  std::vector<Tensor> down_kernels;  // K-1 of [3,(3,)dm_k,dm_{k+1}]
  std::vector<Tensor> fuse_kernels;  // K-1 of [3,(3,)dm_{k+1}+dm_k,dm_k]
};

// Canonical parameter enumeration; fixes checkpoint layout, Adam slot order
// and init draw order.
std::vector<std::pair<std::string, Tensor*>> named_params(ModelParams& p);
long param_count(const ModelParams& p);

ModelParams param_init(const LsmConfig& cfg, std::mt19937_64& rng);
// Copy whose tensors are watched leaves of `tape`, in canonical order.
ModelParams watched(const ModelParams& p, Tape& tape);

struct PadResult {
  GridField field;
  std::vector<long> original_extents;
};

// Smallest zero-padding (high end of each axis) making every scale's extent
// divisible by both the pooling chain and its patch grid.
PadResult pad_to_valid(const GridField& f, const LsmConfig& cfg);
long required_extent_multiple(const LsmConfig& cfg);
GridField crop_to(const GridField& f, const std::vector<long>& extents);

GridField downsample(const GridField& f, const Tensor& down_kernel);
std::vector<GridField> patchify(const GridField& f, long p_count);
GridField depatchify(const std::vector<GridField>& patches, const std::vector<long>& extents);
GridField solve_scale(const GridField& f, const ScaleParams& sp, const LsmConfig& cfg,
                      long scale, SimCounter* counter = nullptr);
GridField upsample_fuse(const GridField& coarse, const GridField& fine,
                        const Tensor& fuse_kernel);
GridField lsm_forward(const GridField& input, const ModelParams& params, const LsmConfig& cfg,
                      SimCounter* counter = nullptr);

// Checkpoint file: magic "LSMC", u32 version, length-prefixed JSON block
// {"config":..., "meta":...}, then each named tensor in canonical order as
// (u32 name length, name, u32 ndim, u64 dims..., f64 LE payload).
void save_checkpoint(const std::string& path, const LsmConfig& cfg, const ModelParams& params,
                     const nlohmann::json& meta);

struct Checkpoint {
  LsmConfig config;
  ModelParams params;
  nlohmann::json meta;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lsm
