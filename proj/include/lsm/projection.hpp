#pragma once

#include <cstdint>
#include <random>

#include "lsm/tensor.hpp"

namespace lsm {

// Counts similarity evaluations; each projector call adds exactly C*|D|,
// which is what makes the projection linear in the coordinate-set size.
struct SimCounter {
  uint64_t evals = 0;
};

// C learnable latent tokens acting as physical prompts for one scale; shared
// across all patches of that scale, independent across scales.
struct LatentTokenSet {
  Tensor tokens;  // [C x d_latent]
  long scale_index = 0;
};

struct ProjectorParams {
  Tensor w_k;       // [d_model x d_latent]
  Tensor w_v;       // [d_model x d_latent]
  Tensor w_k_back;  // [d_latent x d_model]
  Tensor w_v_back;  // [d_latent x d_model]
};

// Entries i.i.d. N(0, 0.02); deterministic given the generator state.
LatentTokenSet init_latent_tokens(long c, long d_latent, std::mt19937_64& rng);

// row i = T_i + sum_s softmax_s(T_i (x(s) W_K)^T) (x(s) W_V), stabilized.
// features: [|D| x d_model] -> [C x d_latent].
Tensor coord_to_latent(const LatentTokenSet& tokens, const Tensor& features,
                       const ProjectorParams& params, SimCounter* counter = nullptr);

// out(s) = x(s) + sum_i softmax_i(x(s) (T_y,i W'_K)^T) (T_y,i W'_V).
// features: [|D| x d_model], latent_out: [C x d_latent] -> [|D| x d_model].
Tensor latent_to_coord(const Tensor& features, const Tensor& latent_out,
                       const ProjectorParams& params, SimCounter* counter = nullptr);

}  // namespace lsm
