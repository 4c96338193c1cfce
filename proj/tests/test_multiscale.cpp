#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "lsm/multiscale.hpp"

using namespace lsm;

namespace {

GridField random_field(std::vector<long> extents, long channels, std::mt19937_64& rng) {
  GridField f = GridField::zeros(std::move(extents), channels);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : *f.values.data) v = dist(rng);
  return f;
}

LsmConfig toy_config() {
  LsmConfig cfg;
  cfg.c_tokens = 2;
  cfg.n_basis = 4;
  cfg.k_scales = 2;
  cfg.d_model = {4, 8};
  cfg.d_latent = {4, 8};
  cfg.patches = {4, 1};
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  LsmConfig cfg;  // paper defaults
  cfg.validate();
  CHECK(cfg.c_tokens == 4);
  CHECK(cfg.n_basis == 24);
  CHECK(cfg.k_scales == 5);
  CHECK(cfg.patches == std::vector<long>{256, 64, 16, 4, 1});

  LsmConfig bad = cfg;
  bad.patches = {256, 64, 16, 4, 2};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("coarsest"), std::invalid_argument);

  bad = cfg;
  bad.patches = {200, 64, 16, 4, 1};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("square"), std::invalid_argument);

  bad = cfg;
  bad.d_model = {32, 64};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.n_basis = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("config json round trip rejects unknown keys") {
  const LsmConfig cfg = toy_config();
  const nlohmann::json j = config_to_json(cfg);
  const LsmConfig back = config_from_json(j);
  CHECK(back.d_model == cfg.d_model);
  CHECK(back.patches == cfg.patches);

  nlohmann::json typo = j;
  typo["c_tokenz"] = 4;
  CHECK_THROWS_WITH_AS(config_from_json(typo), doctest::Contains("c_tokenz"),
                       std::invalid_argument);
}

TEST_CASE("pad_to_valid") {
  LsmConfig cfg;  // K=5, 16x16 patch grid at scale 1 -> multiple 16
  CHECK(required_extent_multiple(cfg) == 16);

  std::mt19937_64 rng(1);
  const GridField ok = random_field({64, 64}, 1, rng);
  const PadResult no_pad = pad_to_valid(ok, cfg);
  CHECK(no_pad.field.extents == std::vector<long>{64, 64});
  CHECK(no_pad.field.values.vals() == ok.values.vals());

  const GridField darcy_native = random_field({85, 85}, 1, rng);
  const PadResult padded = pad_to_valid(darcy_native, cfg);
  CHECK(padded.field.extents == std::vector<long>{96, 96});
  CHECK(padded.original_extents == std::vector<long>{85, 85});
  // High-end padding preserves the original block; crop restores it exactly.
  const GridField cropped = crop_to(padded.field, {85, 85});
  CHECK(cropped.values.vals() == darcy_native.values.vals());
  // Padded cells are zero.
  CHECK(padded.field.values.vals()[96 * 96 - 1] == 0.0);
}

TEST_CASE("downsample halves extents and maps channels") {
  LsmConfig cfg;
  std::mt19937_64 rng(2);
  ModelParams params = param_init(cfg, rng);
  const GridField x = random_field({64, 64}, 32, rng);
  const GridField down = downsample(x, params.down_kernels[0]);
  CHECK(down.extents == std::vector<long>{32, 32});
  CHECK(down.channels == 64);

  // Constant field stays constant through max pooling; a centered identity
  // kernel then reproduces it at half resolution.
  GridField c = GridField::zeros({8, 8}, 2);
  for (auto& v : *c.values.data) v = 1.5;
  Tensor ident = Tensor::zeros({3, 3, 2, 2});
  (*ident.data)[((1 * 3 + 1) * 2 + 0) * 2 + 0] = 1.0;
  (*ident.data)[((1 * 3 + 1) * 2 + 1) * 2 + 1] = 1.0;
  const GridField dc = downsample(c, ident);
  CHECK(dc.extents == std::vector<long>{4, 4});
  for (double v : dc.values.vals()) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("patchify and depatchify") {
  std::mt19937_64 rng(3);
  const GridField f = random_field({4, 4}, 3, rng);

  const auto one = patchify(f, 1);
  CHECK(one.size() == 1);
  CHECK(one[0].values.vals() == f.values.vals());

  const auto four = patchify(f, 4);
  CHECK(four.size() == 4);
  for (const auto& p : four) CHECK(p.extents == std::vector<long>{2, 2});
  // Row-major tile order: patch 1 holds columns 2..3 of rows 0..1.
  for (long li = 0; li < 2; ++li)
    for (long lj = 0; lj < 2; ++lj)
      for (long c = 0; c < 3; ++c)
        CHECK(four[1].values.vals()[(li * 2 + lj) * 3 + c] ==
              f.values.vals()[(li * 4 + (lj + 2)) * 3 + c]);

  const GridField back = depatchify(four, f.extents);
  CHECK(back.values.vals() == f.values.vals());

  const auto sixteen = patchify(f, 16);
  CHECK(depatchify(sixteen, f.extents).values.vals() == f.values.vals());

  CHECK_THROWS_AS(patchify(random_field({6, 6}, 1, rng), 16), std::invalid_argument);

  // Rank 1.
  const GridField line = random_field({12}, 2, rng);
  CHECK(depatchify(patchify(line, 4), line.extents).values.vals() == line.values.vals());
}

TEST_CASE("solve_scale closed-form residual shift") {
  // Zero tokens, zero W_K/W_V/W'_K, identity W'_V, spectral w0 = c:
  // T_x = 0, T_y = c, uniform back-attention adds exactly c per channel.
  LsmConfig cfg = toy_config();
  std::mt19937_64 rng(4);
  ModelParams params = param_init(cfg, rng);
  const long dm = cfg.d_model[0];
  ScaleParams& s0 = params.scales[0];
  s0.tokens.tokens = Tensor::zeros({cfg.c_tokens, dm});
  s0.proj.w_k = Tensor::zeros({dm, dm});
  s0.proj.w_v = Tensor::zeros({dm, dm});
  s0.proj.w_k_back = Tensor::zeros({dm, dm});
  Tensor eye = Tensor::zeros({dm, dm});
  for (long i = 0; i < dm; ++i) (*eye.data)[i * dm + i] = 1.0;
  s0.proj.w_v_back = eye;
  const double shift = 0.37;
  s0.spec.w0 = Tensor::full({dm}, shift);

  const GridField x = random_field({8, 8}, dm, rng);
  const GridField y = solve_scale(x, s0, cfg, 0);
  for (size_t i = 0; i < x.values.vals().size(); ++i)
    CHECK(y.values.vals()[i] == doctest::Approx(x.values.vals()[i] + shift).epsilon(1e-12));
}

TEST_CASE("solve_scale toggle semantics") {
  LsmConfig cfg = toy_config();
  cfg.ablation.use_projector = false;
  cfg.ablation.use_spectral = false;
  std::mt19937_64 rng(5);
  ModelParams params = param_init(cfg, rng);
  const GridField x = random_field({8, 8}, cfg.d_model[0], rng);
  const GridField y = solve_scale(x, params.scales[0], cfg, 0);
  const GridField direct = conv(x, params.scales[0].coord_conv, 1, 1);
  CHECK(y.values.vals() == direct.values.vals());
  CHECK(y.extents == x.extents);
}

TEST_CASE("single patch equals patchify-free processing") {
  LsmConfig cfg = toy_config();
  cfg.patches = {1, 1};
  std::mt19937_64 rng(6);
  ModelParams params = param_init(cfg, rng);
  const GridField x = random_field({8, 8}, cfg.d_model[0], rng);
  const GridField with_patchify = solve_scale(x, params.scales[0], cfg, 0);
  LsmConfig no_patch = cfg;
  no_patch.ablation.use_patchify = false;
  const GridField without = solve_scale(x, params.scales[0], no_patch, 0);
  CHECK(with_patchify.values.vals() == without.values.vals());
}

TEST_CASE("upsample_fuse") {
  std::mt19937_64 rng(7);
  const long c_coarse = 3, c_fine = 2;
  GridField coarse = GridField::zeros({4, 4}, c_coarse);
  GridField fine = GridField::zeros({8, 8}, c_fine);
  for (auto& v : *coarse.values.data) v = 2.0;
  for (auto& v : *fine.values.data) v = -1.0;
  // Center-only averaging kernel: output = mean of the concatenated channels.
  Tensor avg = Tensor::zeros({3, 3, c_coarse + c_fine, c_fine});
  for (long ic = 0; ic < c_coarse + c_fine; ++ic)
    for (long oc = 0; oc < c_fine; ++oc)
      (*avg.data)[((1 * 3 + 1) * (c_coarse + c_fine) + ic) * c_fine + oc] =
          1.0 / (c_coarse + c_fine);
  const GridField fused = upsample_fuse(coarse, fine, avg);
  CHECK(fused.extents == std::vector<long>{8, 8});
  CHECK(fused.channels == c_fine);
  const double expect = (3 * 2.0 + 2 * -1.0) / 5.0;
  for (double v : fused.values.vals()) CHECK(v == doctest::Approx(expect).epsilon(1e-14));

  GridField wrong = GridField::zeros({3, 3}, c_coarse);
  CHECK_THROWS_AS(upsample_fuse(wrong, fine, avg), std::invalid_argument);
}

TEST_CASE("lsm_forward shape contract and determinism") {
  LsmConfig cfg = toy_config();
  std::mt19937_64 rng(8);
  ModelParams params = param_init(cfg, rng);
  const GridField x = random_field({8, 8}, 1, rng);
  const GridField y1 = lsm_forward(x, params, cfg);
  CHECK(y1.extents == x.extents);
  CHECK(y1.channels == cfg.d_y);
  const GridField y2 = lsm_forward(x, params, cfg);
  CHECK(y1.values.vals() == y2.values.vals());

  // Non-divisible input gets padded and cropped back.
  const GridField odd = random_field({9, 11}, 1, rng);
  const GridField yo = lsm_forward(odd, params, cfg);
  CHECK(yo.extents == std::vector<long>{9, 11});
}

TEST_CASE("lsm_forward rank 1") {
  LsmConfig cfg = toy_config();
  cfg.spatial_rank = 1;
  std::mt19937_64 rng(9);
  ModelParams params = param_init(cfg, rng);
  const GridField x = random_field({16}, 1, rng);
  const GridField y = lsm_forward(x, params, cfg);
  CHECK(y.extents == x.extents);
  CHECK(y.channels == 1);
}

TEST_CASE("scale parameters are shared across patches and isolated across scales") {
  LsmConfig cfg = toy_config();
  std::mt19937_64 rng(10);
  ModelParams params = param_init(cfg, rng);
  const GridField x0 = random_field({8, 8}, cfg.d_model[0], rng);
  const GridField x1 = random_field({4, 4}, cfg.d_model[1], rng);

  const GridField base0 = solve_scale(x0, params.scales[0], cfg, 0);
  const GridField base1 = solve_scale(x1, params.scales[1], cfg, 1);

  ModelParams bumped = params;
  bumped.scales[0].spec.w0 = Tensor::full({cfg.d_latent[0]}, 0.25);

  const GridField new0 = solve_scale(x0, bumped.scales[0], cfg, 0);
  const GridField new1 = solve_scale(x1, bumped.scales[1], cfg, 1);
  CHECK(new1.values.vals() == base1.values.vals());  // other scale untouched

  // Every patch region of scale 0 changes (params shared across patches).
  const long g = cfg.patch_grid_extent(0);
  const long hp = 8 / g;
  for (long pr = 0; pr < g; ++pr)
    for (long pc = 0; pc < g; ++pc) {
      bool changed = false;
      for (long li = 0; li < hp && !changed; ++li)
        for (long lj = 0; lj < hp && !changed; ++lj)
          for (long c = 0; c < cfg.d_model[0] && !changed; ++c) {
            const size_t idx =
                static_cast<size_t>(((pr * hp + li) * 8 + (pc * hp + lj)) * cfg.d_model[0] + c);
            changed = new0.values.vals()[idx] != base0.values.vals()[idx];
          }
      CHECK(changed);
    }
}

TEST_CASE("use_spectral=false makes outputs independent of spectral weights") {
  LsmConfig cfg = toy_config();
  cfg.ablation.use_spectral = false;
  std::mt19937_64 rng(11);
  ModelParams params = param_init(cfg, rng);
  const GridField x = random_field({8, 8}, 1, rng);
  const GridField base = lsm_forward(x, params, cfg);

  ModelParams perturbed = params;
  for (auto& s : perturbed.scales) {
    s.spec.w0 = Tensor::full(s.spec.w0.shape, 7.0);
    s.spec.w_sin = Tensor::full(s.spec.w_sin.shape, -3.0);
    s.spec.w_cos = Tensor::full(s.spec.w_cos.shape, 11.0);
  }
  const GridField same = lsm_forward(x, perturbed, cfg);
  for (size_t i = 0; i < base.values.vals().size(); ++i)
    CHECK(std::abs(same.values.vals()[i] - base.values.vals()[i]) < 1e-12);
}

TEST_CASE("param_init determinism and structure") {
  LsmConfig cfg = toy_config();
  std::mt19937_64 a(99), b(99);
  ModelParams p1 = param_init(cfg, a);
  ModelParams p2 = param_init(cfg, b);
  auto n1 = named_params(p1), n2 = named_params(p2);
  REQUIRE(n1.size() == n2.size());
  for (size_t i = 0; i < n1.size(); ++i) {
    CHECK(n1[i].first == n2[i].first);
    CHECK(n1[i].second->vals() == n2[i].second->vals());
  }
  for (auto& s : p1.scales) {
    for (double v : s.spec.w0.vals()) CHECK(v == 0.0);
    for (double v : s.spec.w_sin.vals()) CHECK(v == 0.0);
    for (double v : s.spec.w_cos.vals()) CHECK(v == 0.0);
  }

  // Enumerated count matches the closed-form sum for this config.
  long expect = 0;
  expect += (1 + 2) * 4 + 4 * 1;  // embed (input + coord channels) + readout
  for (long k = 0; k < 2; ++k) {
    const long dm = cfg.d_model[k], dl = cfg.d_latent[k];
    expect += cfg.c_tokens * dl;        // tokens
    expect += 2 * dm * dl + 2 * dl * dm;  // projector
    expect += dl + 2 * (cfg.n_basis / 2); // spectral
  }
  expect += 3 * 3 * 4 * 8;        // downsample kernel
  expect += 3 * 3 * (8 + 4) * 4;  // fuse kernel
  CHECK(param_count(p1) == expect);
}

TEST_CASE("checkpoint round trip is bitwise") {
  LsmConfig cfg = toy_config();
  std::mt19937_64 rng(12);
  ModelParams params = param_init(cfg, rng);
  const std::string path = "test_checkpoint.lsmc";
  save_checkpoint(path, cfg, params, {{"note", 1}});
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.meta.at("note") == 1);
  auto orig = named_params(params);
  auto loaded = named_params(ck.params);
  REQUIRE(orig.size() == loaded.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == loaded[i].first);
    CHECK(orig[i].second->vals() == loaded[i].second->vals());
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects corruption") {
  LsmConfig cfg = toy_config();
  std::mt19937_64 rng(13);
  ModelParams params = param_init(cfg, rng);
  const std::string path = "test_checkpoint_bad.lsmc";
  save_checkpoint(path, cfg, params, {});
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("LSMC"), std::runtime_error);

  save_checkpoint(path, cfg, params, {});
  // Truncate and expect the byte offset in the error.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("byte"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("full toy model gradcheck") {
  LsmConfig cfg = toy_config();
  std::mt19937_64 rng(14);
  // Moderate random weights keep every gradient path live (training init has
  // near-zero tokens and zero spectral weights, which starves the key-matrix
  // gradients below finite-difference resolution).
  ModelParams params = param_init(cfg, rng);
  std::uniform_real_distribution<double> dist(-0.4, 0.4);
  for (auto& [name, t] : named_params(params)) {
    auto data = std::make_shared<std::vector<double>>(t->data->size());
    for (auto& v : *data) v = dist(rng);
    t->data = std::move(data);
  }
  GridField x = random_field({8, 8}, 1, rng);
  const GridField target = random_field({8, 8}, 1, rng);

  std::vector<Tensor> flat;
  {
    auto named = named_params(params);
    for (auto& [name, t] : named) flat.push_back(*t);
  }
  // The 1e-5 scale keeps central-difference roundoff below the 1e-8
  // denominator floor of the relative error.
  auto builder = [&](std::vector<Tensor>& p) {
    ModelParams live = params;
    auto named = named_params(live);
    for (size_t i = 0; i < named.size(); ++i) *named[i].second = p[i];
    const GridField pred = lsm_forward(x, live, cfg);
    const Tensor diff = sub(pred.values, target.values);
    return scale(sum_all(mul(diff, diff)), 1e-5 / static_cast<double>(diff.size()));
  };
  const GradcheckReport rep = gradcheck(builder, flat, 1e-6);
  CHECK(rep.finite);
  CHECK(rep.max_rel_err < 1e-5);
}
