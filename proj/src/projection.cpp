#include "lsm/projection.hpp"

#include <stdexcept>

namespace lsm {

LatentTokenSet init_latent_tokens(long c, long d_latent, std::mt19937_64& rng) {
  if (c < 1 || d_latent < 1)
    throw std::invalid_argument("init_latent_tokens: need c >= 1 and d_latent >= 1");
  std::normal_distribution<double> dist(0.0, 0.02);
  std::vector<double> vals(static_cast<size_t>(c * d_latent));
  for (auto& v : vals) v = dist(rng);
  LatentTokenSet set;
  set.tokens = Tensor({c, d_latent}, std::move(vals));
  return set;
}

namespace {
void check_projector_shapes(const Tensor& features, const ProjectorParams& p) {
  if (features.shape.size() != 2)
    throw std::invalid_argument("projector: features must be [|D| x d_model], got " +
                                shape_str(features.shape));
  if (features.shape[0] < 1) throw std::invalid_argument("projector: empty coordinate set");
  if (p.w_k.shape.size() != 2 || p.w_k.shape[0] != features.shape[1])
    throw std::invalid_argument("projector: W_K shape " + shape_str(p.w_k.shape) +
                                " does not accept d_model " + std::to_string(features.shape[1]));
}
}  // namespace

Tensor coord_to_latent(const LatentTokenSet& tokens, const Tensor& features,
                       const ProjectorParams& params, SimCounter* counter) {
  check_projector_shapes(features, params);
  const long c = tokens.tokens.shape[0];
  const long n_coords = features.shape[0];
  const Tensor keys = matmul(features, params.w_k);        // [|D| x dl]
  const Tensor logits = matmul_nt(tokens.tokens, keys);    // [C x |D|]
  if (counter) counter->evals += static_cast<uint64_t>(c * n_coords);
  const Tensor attn = softmax_rows(logits);
  const Tensor vals = matmul(features, params.w_v);        // [|D| x dl]
  return add(tokens.tokens, matmul(attn, vals));
}

Tensor latent_to_coord(const Tensor& features, const Tensor& latent_out,
                       const ProjectorParams& params, SimCounter* counter) {
  check_projector_shapes(features, params);
  if (latent_out.shape.size() != 2 || latent_out.shape[0] < 1)
    throw std::invalid_argument("latent_to_coord: need at least one latent token, got shape " +
                                shape_str(latent_out.shape));
  const long c = latent_out.shape[0];
  const long n_coords = features.shape[0];
  const Tensor keys = matmul(latent_out, params.w_k_back);  // [C x dm]
  const Tensor logits = matmul_nt(features, keys);          // [|D| x C]
  if (counter) counter->evals += static_cast<uint64_t>(c * n_coords);
  const Tensor attn = softmax_rows(logits);
  const Tensor vals = matmul(latent_out, params.w_v_back);  // [C x dm]
  return add(features, matmul(attn, vals));
}

}  // namespace lsm
