#include "lsm/multiscale.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "lsm/binio.hpp"

namespace lsm {

namespace {

long isqrt_exact(long v) {
  const long r = static_cast<long>(std::llround(std::sqrt(static_cast<double>(v))));
  return r * r == v ? r : -1;
}

Shape field_shape(const std::vector<long>& extents, long channels) {
  Shape s = extents;
  s.push_back(channels);
  return s;
}

}  // namespace

void LsmConfig::validate() const {
  if (k_scales < 1) throw std::invalid_argument("config: k_scales must be >= 1");
  if (c_tokens < 1) throw std::invalid_argument("config: c_tokens must be >= 1");
  if (n_basis < 2 || n_basis % 2 != 0)
    throw std::invalid_argument("config: n_basis must be even and positive, got " +
                                std::to_string(n_basis));
  if (spatial_rank != 1 && spatial_rank != 2)
    throw std::invalid_argument("config: spatial_rank must be 1 or 2");
  if (d_x < 1 || d_y < 1) throw std::invalid_argument("config: d_x and d_y must be >= 1");
  if (downsample_ratio != 0.5)
    throw std::invalid_argument("config: only downsample_ratio 0.5 is supported (pool window 2)");
  const auto K = static_cast<size_t>(k_scales);
  if (d_model.size() != K || d_latent.size() != K || patches.size() != K)
    throw std::invalid_argument("config: d_model/d_latent/patches must each list k_scales=" +
                                std::to_string(k_scales) + " entries");
  if (patches.back() != 1)
    throw std::invalid_argument("config: patches at the coarsest scale must be 1");
  for (size_t k = 0; k < K; ++k) {
    if (d_model[k] < 1 || d_latent[k] < 1 || patches[k] < 1)
      throw std::invalid_argument("config: extents at scale " + std::to_string(k) +
                                  " must be positive");
    if (spatial_rank == 2 && isqrt_exact(patches[k]) < 0)
      throw std::invalid_argument("config: patches[" + std::to_string(k) + "]=" +
                                  std::to_string(patches[k]) +
                                  " is not a perfect square (rank 2 patch grids are square)");
  }
  if (!ablation.use_projector && ablation.use_spectral) {
    for (size_t k = 0; k < K; ++k)
      if (d_model[k] != d_latent[k])
        throw std::invalid_argument(
            "config: use_projector=false with use_spectral=true applies the spectral block in "
            "coordinate space and needs d_latent == d_model at every scale");
  }
}

long LsmConfig::patch_count(long scale) const {
  if (!ablation.use_patchify) return 1;
  return patches[static_cast<size_t>(scale)];
}

long LsmConfig::patch_grid_extent(long scale) const {
  const long p = patch_count(scale);
  if (spatial_rank == 1) return p;
  const long g = isqrt_exact(p);
  if (g < 0) throw std::logic_error("patch grid: count not a perfect square");
  return g;
}

nlohmann::json config_to_json(const LsmConfig& cfg) {
  const char* kind = cfg.ablation.projector_kind == ProjectorKind::attention ? "attention"
                     : cfg.ablation.projector_kind == ProjectorKind::conv    ? "conv"
                                                                             : "avgpool";
  return {{"c_tokens", cfg.c_tokens},
          {"n_basis", cfg.n_basis},
          {"k_scales", cfg.k_scales},
          {"d_model", cfg.d_model},
          {"d_latent", cfg.d_latent},
          {"patches", cfg.patches},
          {"downsample_ratio", cfg.downsample_ratio},
          {"d_x", cfg.d_x},
          {"d_y", cfg.d_y},
          {"spatial_rank", cfg.spatial_rank},
          {"append_coords", cfg.append_coords},
          {"ablation",
           {{"use_spectral", cfg.ablation.use_spectral},
            {"use_patchify", cfg.ablation.use_patchify},
            {"use_projector", cfg.ablation.use_projector},
            {"single_scale", cfg.ablation.single_scale},
            {"projector_kind", kind},
            {"normalize_latent", cfg.ablation.normalize_latent}}}};
}

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed) known = known || k == it.key();
    if (!known)
      throw std::invalid_argument(context + ": unknown key \"" + it.key() + "\"");
  }
}

LsmConfig config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"c_tokens", "n_basis", "k_scales", "d_model", "d_latent", "patches",
                       "downsample_ratio", "d_x", "d_y", "spatial_rank", "append_coords",
                       "ablation"},
                      "config");
  LsmConfig cfg;
  cfg.c_tokens = j.value("c_tokens", cfg.c_tokens);
  cfg.n_basis = j.value("n_basis", cfg.n_basis);
  cfg.k_scales = j.value("k_scales", cfg.k_scales);
  if (j.contains("d_model")) cfg.d_model = j.at("d_model").get<std::vector<long>>();
  if (j.contains("d_latent"))
    cfg.d_latent = j.at("d_latent").get<std::vector<long>>();
  else if (j.contains("d_model"))
    cfg.d_latent = cfg.d_model;  // configurations table ties them by default
  if (j.contains("patches")) cfg.patches = j.at("patches").get<std::vector<long>>();
  cfg.downsample_ratio = j.value("downsample_ratio", cfg.downsample_ratio);
  cfg.d_x = j.value("d_x", cfg.d_x);
  cfg.d_y = j.value("d_y", cfg.d_y);
  cfg.spatial_rank = j.value("spatial_rank", cfg.spatial_rank);
  cfg.append_coords = j.value("append_coords", cfg.append_coords);
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    reject_unknown_keys(a,
                        {"use_spectral", "use_patchify", "use_projector", "single_scale",
                         "projector_kind", "normalize_latent"},
                        "config.ablation");
    cfg.ablation.use_spectral = a.value("use_spectral", cfg.ablation.use_spectral);
    cfg.ablation.use_patchify = a.value("use_patchify", cfg.ablation.use_patchify);
    cfg.ablation.use_projector = a.value("use_projector", cfg.ablation.use_projector);
    cfg.ablation.single_scale = a.value("single_scale", cfg.ablation.single_scale);
    cfg.ablation.normalize_latent = a.value("normalize_latent", cfg.ablation.normalize_latent);
    const std::string kind = a.value("projector_kind", std::string("attention"));
    if (kind == "attention")
      cfg.ablation.projector_kind = ProjectorKind::attention;
    else if (kind == "conv")
      cfg.ablation.projector_kind = ProjectorKind::conv;
    else if (kind == "avgpool")
      cfg.ablation.projector_kind = ProjectorKind::avgpool;
    else
      throw std::invalid_argument("config.ablation: unknown projector_kind \"" + kind + "\"");
  }
  cfg.validate();
  return cfg;
}

std::vector<std::pair<std::string, Tensor*>> named_params(ModelParams& p) {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed", &p.embed);
  for (size_t k = 0; k < p.scales.size(); ++k) {
    const std::string pre = "scale" + std::to_string(k) + ".";
    ScaleParams& s = p.scales[k];
    out.emplace_back(pre + "tokens", &s.tokens.tokens);
    out.emplace_back(pre + "w_k", &s.proj.w_k);
    out.emplace_back(pre + "w_v", &s.proj.w_v);
    out.emplace_back(pre + "w_k_back", &s.proj.w_k_back);
    out.emplace_back(pre + "w_v_back", &s.proj.w_v_back);
    out.emplace_back(pre + "spec.w0", &s.spec.w0);
    out.emplace_back(pre + "spec.w_sin", &s.spec.w_sin);
    out.emplace_back(pre + "spec.w_cos", &s.spec.w_cos);
    if (s.coord_conv.size() > 0) out.emplace_back(pre + "coord_conv", &s.coord_conv);
  }
  for (size_t k = 0; k < p.down_kernels.size(); ++k)
    out.emplace_back("down" + std::to_string(k) + ".kernel", &p.down_kernels[k]);
  for (size_t k = 0; k < p.fuse_kernels.size(); ++k)
    out.emplace_back("fuse" + std::to_string(k) + ".kernel", &p.fuse_kernels[k]);
  out.emplace_back("readout", &p.readout);
  return out;
}

long param_count(const ModelParams& p) {
  long n = 0;
  auto& mp = const_cast<ModelParams&>(p);
  for (auto& [name, t] : named_params(mp)) n += t->size();
  return n;
}

namespace {

Tensor uniform_fanin(Shape shape, long fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> vals(static_cast<size_t>(numel(shape)));
  for (auto& v : vals) v = dist(rng);
  return Tensor(std::move(shape), std::move(vals));
}

Shape conv_kernel_shape(long rank, long k, long ci, long co) {
  return rank == 2 ? Shape{k, k, ci, co} : Shape{k, ci, co};
}

}  // namespace

ModelParams param_init(const LsmConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const long K = cfg.effective_scales();
  const long rank = cfg.spatial_rank;
  ModelParams p;
  const long d_in = cfg.d_x + (cfg.append_coords ? rank : 0);
  p.embed = uniform_fanin({d_in, cfg.d_model[0]}, d_in, rng);
  for (long k = 0; k < K; ++k) {
    const long dm = cfg.d_model[static_cast<size_t>(k)];
    const long dl = cfg.d_latent[static_cast<size_t>(k)];
    ScaleParams s;
    s.tokens = init_latent_tokens(cfg.c_tokens, dl, rng);
    s.tokens.scale_index = k;
    s.proj.w_k = uniform_fanin({dm, dl}, dm, rng);
    s.proj.w_v = uniform_fanin({dm, dl}, dm, rng);
    s.proj.w_k_back = uniform_fanin({dl, dm}, dl, rng);
    s.proj.w_v_back = uniform_fanin({dl, dm}, dl, rng);
    s.spec = make_spectral_params(cfg.n_basis, dl);  // zero: block starts as identity
    if (cfg.needs_coord_conv()) {
      const long fan = dm * (rank == 2 ? 9 : 3);
      s.coord_conv = uniform_fanin(conv_kernel_shape(rank, 3, dm, dm), fan, rng);
    }
    p.scales.push_back(std::move(s));
  }
  for (long k = 0; k + 1 < K; ++k) {
    const long ci = cfg.d_model[static_cast<size_t>(k)];
    const long co = cfg.d_model[static_cast<size_t>(k) + 1];
    p.down_kernels.push_back(
        uniform_fanin(conv_kernel_shape(rank, 3, ci, co), ci * (rank == 2 ? 9 : 3), rng));
  }
  for (long k = 0; k + 1 < K; ++k) {
    const long fine = cfg.d_model[static_cast<size_t>(k)];
    const long coarse = cfg.d_model[static_cast<size_t>(k) + 1];
    p.fuse_kernels.push_back(uniform_fanin(conv_kernel_shape(rank, 3, coarse + fine, fine),
                                           (coarse + fine) * (rank == 2 ? 9 : 3), rng));
  }
  p.readout = uniform_fanin({cfg.d_model[0], cfg.d_y}, cfg.d_model[0], rng);
  return p;
}

ModelParams watched(const ModelParams& p, Tape& tape) {
  ModelParams live = p;
  for (auto& [name, t] : named_params(live)) tape.watch(*t);
  return live;
}

long required_extent_multiple(const LsmConfig& cfg) {
  const long K = cfg.effective_scales();
  long mult = 1L << (K - 1);  // pooling chain divisibility
  for (long k = 0; k < K; ++k)
    mult = std::lcm(mult, (1L << k) * cfg.patch_grid_extent(k));
  return mult;
}

namespace {

// Zero-fill gather moving `f` onto new extents (pad with -1 sources, crop by
// dropping rows/cols).
GridField resize_extents(const GridField& f, const std::vector<long>& target) {
  const long c = f.channels;
  long n_target = 1;
  for (long e : target) n_target *= e;
  auto idx = std::make_shared<std::vector<long>>(static_cast<size_t>(n_target * c));
  if (f.rank() == 2) {
    const long h = f.extents[0], w = f.extents[1], ht = target[0], wt = target[1];
    for (long i = 0; i < ht; ++i)
      for (long j = 0; j < wt; ++j)
        for (long ch = 0; ch < c; ++ch)
          (*idx)[static_cast<size_t>((i * wt + j) * c + ch)] =
              (i < h && j < w) ? (i * w + j) * c + ch : -1;
  } else {
    const long n = f.extents[0], nt = target[0];
    for (long i = 0; i < nt; ++i)
      for (long ch = 0; ch < c; ++ch)
        (*idx)[static_cast<size_t>(i * c + ch)] = i < n ? i * c + ch : -1;
  }
  Tensor out = gather(f.values, idx, field_shape(target, c));
  return GridField::wrap(target, c, std::move(out));
}

}  // namespace

PadResult pad_to_valid(const GridField& f, const LsmConfig& cfg) {
  if (f.rank() != cfg.spatial_rank)
    throw std::invalid_argument("pad_to_valid: field rank " + std::to_string(f.rank()) +
                                " does not match config rank " +
                                std::to_string(cfg.spatial_rank));
  const long mult = required_extent_multiple(cfg);
  std::vector<long> target = f.extents;
  bool changed = false;
  for (auto& e : target) {
    const long padded = ((e + mult - 1) / mult) * mult;
    changed = changed || padded != e;
    e = padded;
  }
  PadResult res;
  res.original_extents = f.extents;
  res.field = changed ? resize_extents(f, target) : f;
  return res;
}

GridField crop_to(const GridField& f, const std::vector<long>& extents) {
  for (size_t d = 0; d < extents.size(); ++d)
    if (extents[d] > f.extents[d])
      throw std::invalid_argument("crop_to: target extent exceeds field extent");
  if (extents == f.extents) return f;
  return resize_extents(f, extents);
}

GridField downsample(const GridField& f, const Tensor& down_kernel) {
  return conv(pool_max(f, 2), down_kernel, 1, 1);
}

std::vector<GridField> patchify(const GridField& f, long p_count) {
  if (p_count < 1) throw std::invalid_argument("patchify: patch count must be positive");
  if (p_count == 1) return {f};
  const long c = f.channels;
  std::vector<GridField> out;
  out.reserve(static_cast<size_t>(p_count));
  if (f.rank() == 2) {
    const long g = isqrt_exact(p_count);
    if (g < 0)
      throw std::invalid_argument("patchify: rank-2 patch count " + std::to_string(p_count) +
                                  " is not a perfect square");
    const long h = f.extents[0], w = f.extents[1];
    if (h % g != 0 || w % g != 0)
      throw std::invalid_argument("patchify: extents " + shape_str(f.extents) +
                                  " not divisible by patch grid " + std::to_string(g));
    const long hp = h / g, wp = w / g;
    for (long pr = 0; pr < g; ++pr) {
      for (long pc = 0; pc < g; ++pc) {
        auto idx = std::make_shared<std::vector<long>>(static_cast<size_t>(hp * wp * c));
        for (long li = 0; li < hp; ++li)
          for (long lj = 0; lj < wp; ++lj)
            for (long ch = 0; ch < c; ++ch)
              (*idx)[static_cast<size_t>((li * wp + lj) * c + ch)] =
                  ((pr * hp + li) * w + (pc * wp + lj)) * c + ch;
        out.push_back(GridField::wrap({hp, wp}, c, gather(f.values, idx, {hp, wp, c})));
      }
    }
  } else {
    const long n = f.extents[0];
    if (n % p_count != 0)
      throw std::invalid_argument("patchify: extent " + std::to_string(n) +
                                  " not divisible by patch count " + std::to_string(p_count));
    const long np = n / p_count;
    for (long pr = 0; pr < p_count; ++pr) {
      auto idx = std::make_shared<std::vector<long>>(static_cast<size_t>(np * c));
      for (long li = 0; li < np; ++li)
        for (long ch = 0; ch < c; ++ch)
          (*idx)[static_cast<size_t>(li * c + ch)] = (pr * np + li) * c + ch;
      out.push_back(GridField::wrap({np}, c, gather(f.values, idx, {np, c})));
    }
  }
  return out;
}

GridField depatchify(const std::vector<GridField>& patches, const std::vector<long>& extents) {
  if (patches.empty()) throw std::invalid_argument("depatchify: no patches");
  if (patches.size() == 1) {
    if (patches[0].extents != extents)
      throw std::invalid_argument("depatchify: single patch extents mismatch");
    return patches[0];
  }
  const long c = patches[0].channels;
  const long p_count = static_cast<long>(patches.size());
  // Stack patch rows, then permute back to field order with one gather.
  std::vector<Tensor> flat;
  flat.reserve(patches.size());
  for (const auto& p : patches) flat.push_back(reshape(p.values, {p.coord_count(), c}));
  Tensor stacked = concat_rows(flat);
  long n_coords = 1;
  for (long e : extents) n_coords *= e;
  auto idx = std::make_shared<std::vector<long>>(static_cast<size_t>(n_coords * c));
  if (extents.size() == 2) {
    const long g = isqrt_exact(p_count);
    const long h = extents[0], w = extents[1];
    const long hp = h / g, wp = w / g;
    for (long i = 0; i < h; ++i) {
      const long pr = i / hp, li = i % hp;
      for (long j = 0; j < w; ++j) {
        const long pc = j / wp, lj = j % wp;
        const long patch = pr * g + pc;
        for (long ch = 0; ch < c; ++ch)
          (*idx)[static_cast<size_t>((i * w + j) * c + ch)] =
              (patch * hp * wp + li * wp + lj) * c + ch;
      }
    }
  } else {
    for (long i = 0; i < n_coords * c; ++i) (*idx)[static_cast<size_t>(i)] = i;
  }
  Tensor field = gather(stacked, idx, field_shape(extents, c));
  return GridField::wrap(extents, c, std::move(field));
}

namespace {

// Constant per-segment averaging matrix [c x s]: C near-equal contiguous
// row-major segments.
Tensor segment_avg_matrix(long c, long s) {
  if (s < c)
    throw std::invalid_argument("projector: patch has " + std::to_string(s) +
                                " coordinates, fewer than " + std::to_string(c) + " tokens");
  std::vector<double> m(static_cast<size_t>(c * s), 0.0);
  for (long i = 0; i < c; ++i) {
    const long lo = i * s / c, hi = (i + 1) * s / c;
    for (long j = lo; j < hi; ++j) m[static_cast<size_t>(i * s + j)] = 1.0 / (hi - lo);
  }
  return Tensor({c, s}, std::move(m));
}

Tensor segment_broadcast_matrix(long s, long c) {
  std::vector<double> m(static_cast<size_t>(s * c), 0.0);
  for (long i = 0; i < c; ++i) {
    const long lo = i * s / c, hi = (i + 1) * s / c;
    for (long j = lo; j < hi; ++j) m[static_cast<size_t>(j * c + i)] = 1.0;
  }
  return Tensor({s, c}, std::move(m));
}

// Affine map of the token matrix into [0, pi]; range statistics are taken
// from the forward values and differentiated as constants.
Tensor rescale_to_unit_pi(const Tensor& t) {
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (double v : *t.data) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  const double s = M_PI / (mx - mn + 1e-12);
  return scale(add(t, Tensor::full(t.shape, -mn)), s);
}

}  // namespace

GridField solve_scale(const GridField& f, const ScaleParams& sp, const LsmConfig& cfg, long scale,
                      SimCounter* counter) {
  const long dm = cfg.d_model[static_cast<size_t>(scale)];
  if (f.channels != dm)
    throw std::invalid_argument("solve_scale: field has " + std::to_string(f.channels) +
                                " channels, scale " + std::to_string(scale) + " expects " +
                                std::to_string(dm));
  const auto& ab = cfg.ablation;

  if (!ab.use_projector) {
    GridField out = conv(f, sp.coord_conv, 1, 1);
    if (ab.use_spectral) {
      Tensor rows = reshape(out.values, {out.coord_count(), dm});
      if (ab.normalize_latent) rows = rescale_to_unit_pi(rows);
      rows = spectral_forward(rows, sp.spec);
      out = GridField::wrap(out.extents, dm, reshape(rows, field_shape(out.extents, dm)));
    }
    return out;
  }

  const bool conv_kind = ab.projector_kind == ProjectorKind::conv;
  GridField pre = conv_kind ? conv(f, sp.coord_conv, 1, 1) : f;

  const long p_count = cfg.patch_count(scale);
  const std::vector<GridField> patches = patchify(f, p_count);
  const std::vector<GridField> pre_patches = conv_kind ? patchify(pre, p_count) : patches;

  std::vector<GridField> solved;
  solved.reserve(patches.size());
  for (size_t j = 0; j < patches.size(); ++j) {
    const long s = patches[j].coord_count();
    const Tensor x = reshape(patches[j].values, {s, dm});
    Tensor t_x;
    if (ab.projector_kind == ProjectorKind::attention) {
      t_x = coord_to_latent(sp.tokens, x, sp.proj, counter);
    } else {
      const Tensor x_agg = reshape(pre_patches[j].values, {s, dm});
      t_x = matmul(segment_avg_matrix(cfg.c_tokens, s), matmul(x_agg, sp.proj.w_v));
    }
    if (ab.normalize_latent) t_x = rescale_to_unit_pi(t_x);
    const Tensor t_y = ab.use_spectral ? spectral_forward(t_x, sp.spec) : t_x;
    Tensor y;
    if (ab.projector_kind == ProjectorKind::attention) {
      y = latent_to_coord(x, t_y, sp.proj, counter);
    } else {
      y = add(x, matmul(segment_broadcast_matrix(s, cfg.c_tokens),
                        matmul(t_y, sp.proj.w_v_back)));
    }
    solved.push_back(GridField::wrap(patches[j].extents, dm,
                                     reshape(y, field_shape(patches[j].extents, dm))));
  }
  return depatchify(solved, f.extents);
}

GridField upsample_fuse(const GridField& coarse, const GridField& fine,
                        const Tensor& fuse_kernel) {
  for (size_t d = 0; d < fine.extents.size(); ++d)
    if (coarse.extents[d] * 2 != fine.extents[d])
      throw std::invalid_argument("upsample_fuse: coarse extents " + shape_str(coarse.extents) +
                                  " are not half of fine " + shape_str(fine.extents));
  const GridField up = interpolate_linear(coarse, fine.extents);
  const Tensor cat = concat_last(up.values, fine.values);
  const GridField cat_field =
      GridField::wrap(fine.extents, up.channels + fine.channels, cat);
  return conv(cat_field, fuse_kernel, 1, 1);
}

GridField lsm_forward(const GridField& input, const ModelParams& params, const LsmConfig& cfg,
                      SimCounter* counter) {
  cfg.validate();
  if (input.channels != cfg.d_x)
    throw std::invalid_argument("lsm_forward: input has " + std::to_string(input.channels) +
                                " channels, config d_x=" + std::to_string(cfg.d_x));
  const long K = cfg.effective_scales();
  if (static_cast<long>(params.scales.size()) != K)
    throw std::invalid_argument("lsm_forward: params built for " +
                                std::to_string(params.scales.size()) + " scales, config wants " +
                                std::to_string(K));

  PadResult padded = pad_to_valid(input, cfg);
  const long n0 = padded.field.coord_count();

  GridField staged = padded.field;
  if (cfg.append_coords) {
    // Coordinate channels on the padded grid, h = 1/(extent-1) per axis.
    const auto& ext = padded.field.extents;
    const long rank = cfg.spatial_rank;
    std::vector<double> coords(static_cast<size_t>(n0 * rank));
    if (rank == 2) {
      const double hy = ext[0] > 1 ? 1.0 / static_cast<double>(ext[0] - 1) : 0.0;
      const double hx = ext[1] > 1 ? 1.0 / static_cast<double>(ext[1] - 1) : 0.0;
      for (long i = 0; i < ext[0]; ++i)
        for (long j = 0; j < ext[1]; ++j) {
          coords[static_cast<size_t>((i * ext[1] + j) * 2)] = static_cast<double>(i) * hy;
          coords[static_cast<size_t>((i * ext[1] + j) * 2 + 1)] = static_cast<double>(j) * hx;
        }
    } else {
      const double h = ext[0] > 1 ? 1.0 / static_cast<double>(ext[0] - 1) : 0.0;
      for (long i = 0; i < ext[0]; ++i)
        coords[static_cast<size_t>(i)] = static_cast<double>(i) * h;
    }
    const Tensor cat =
        concat_last(padded.field.values, Tensor(field_shape(ext, rank), std::move(coords)));
    staged = GridField::wrap(ext, cfg.d_x + rank, cat);
  }

  // Embed: pointwise linear (d_x [+ coords]) -> d_model[0].
  Tensor e = matmul(reshape(staged.values, {n0, staged.channels}), params.embed);
  GridField x = GridField::wrap(padded.field.extents, cfg.d_model[0],
                                reshape(e, field_shape(padded.field.extents, cfg.d_model[0])));

  std::vector<GridField> per_scale;
  per_scale.push_back(x);
  for (long k = 0; k + 1 < K; ++k)
    per_scale.push_back(downsample(per_scale.back(), params.down_kernels[static_cast<size_t>(k)]));

  std::vector<GridField> solved;
  for (long k = 0; k < K; ++k)
    solved.push_back(solve_scale(per_scale[static_cast<size_t>(k)],
                                 params.scales[static_cast<size_t>(k)], cfg, k, counter));

  GridField out = solved[static_cast<size_t>(K - 1)];
  for (long k = K - 2; k >= 0; --k)
    out = upsample_fuse(out, solved[static_cast<size_t>(k)],
                        params.fuse_kernels[static_cast<size_t>(k)]);

  Tensor r = matmul(reshape(out.values, {n0, cfg.d_model[0]}), params.readout);
  GridField y = GridField::wrap(padded.field.extents, cfg.d_y,
                                reshape(r, field_shape(padded.field.extents, cfg.d_y)));
  return crop_to(y, padded.original_extents);
}

void save_checkpoint(const std::string& path, const LsmConfig& cfg, const ModelParams& params,
                     const nlohmann::json& meta) {
  binio::Writer w(path);
  w.magic("LSMC");
  w.u32(1);
  nlohmann::json block = {{"config", config_to_json(cfg)}, {"meta", meta}};
  w.str(block.dump());
  auto& mp = const_cast<ModelParams&>(params);
  for (auto& [name, t] : named_params(mp)) {
    w.str(name);
    w.u32(static_cast<uint32_t>(t->shape.size()));
    for (long d : t->shape) w.u64(static_cast<uint64_t>(d));
    w.f64_array(*t->data);
  }
  w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  binio::Reader r(path);
  r.magic("LSMC");
  const uint32_t version = r.u32();
  if (version != 1)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  const nlohmann::json block = nlohmann::json::parse(r.str());
  Checkpoint ck;
  ck.config = config_from_json(block.at("config"));
  ck.meta = block.value("meta", nlohmann::json::object());
  std::mt19937_64 dummy(0);
  ck.params = param_init(ck.config, dummy);
  for (auto& [name, t] : named_params(ck.params)) {
    const std::string got = r.str();
    if (got != name)
      throw std::runtime_error(path + ": expected tensor \"" + name + "\", found \"" + got +
                               "\" at byte " + std::to_string(r.offset()));
    const uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<long>(r.u64());
    if (shape != t->shape)
      throw std::runtime_error(path + ": tensor \"" + name + "\" has shape " + shape_str(shape) +
                               ", expected " + shape_str(t->shape));
    auto data = std::make_shared<std::vector<double>>();
    r.f64_array(*data, static_cast<size_t>(numel(shape)));
    t->data = std::move(data);
  }
  return ck;
}

}  // namespace lsm
