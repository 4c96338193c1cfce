// Command-line front door: data generation, training, evaluation, theory
// verification, gradient checking and projector complexity benchmarking.
// Exit codes: 0 success, 1 assertion/check failure, 2 usage/IO error.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsm/multiscale.hpp"
#include "lsm/pde_data.hpp"
#include "lsm/projection.hpp"
#include "lsm/spectral.hpp"
#include "lsm/training.hpp"

using nlohmann::json;

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("LSM_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) omp_set_num_threads(static_cast<int>(n));
  }
}

struct RunConfig {
  lsm::LsmConfig model;
  lsm::TrainOptions train;
};

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file not found: " + path);
  json j = json::parse(in);
  lsm::reject_unknown_keys(
      j,
      {"c_tokens", "n_basis", "k_scales", "d_model", "d_latent", "patches", "downsample_ratio",
       "d_x", "d_y", "spatial_rank", "ablation", "epochs", "batch_size", "lr", "lr_schedule",
       "seed", "grad_clip_norm"},
      "run config");
  RunConfig rc;
  rc.train.epochs = j.value("epochs", 500L);
  rc.train.batch_size = j.value("batch_size", 20L);
  rc.train.lr = j.value("lr", 1e-3);
  rc.train.seed = j.value("seed", static_cast<uint64_t>(0));
  rc.train.grad_clip_norm = j.value("grad_clip_norm", 0.0);
  if (j.contains("lr_schedule")) rc.train.schedule = lsm::LrSchedule::from_json(j["lr_schedule"]);
  for (const char* key :
       {"epochs", "batch_size", "lr", "lr_schedule", "seed", "grad_clip_norm"})
    j.erase(key);
  rc.model = lsm::config_from_json(j);
  return rc;
}

std::vector<long> parse_long_list(const std::string& csv, const char* what) {
  std::vector<long> out;
  std::string item;
  std::stringstream ss(csv);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t pos = 0;
    const long v = std::stol(item, &pos);
    if (pos != item.size()) throw std::runtime_error(std::string("bad ") + what + ": " + item);
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error(std::string("empty ") + what);
  return out;
}

int cmd_gen(const std::string& pde, long n, long extent, uint64_t seed, double test_frac,
            const std::string& out_dir, const lsm::GeneratorParams& gen, bool standardize) {
  if (pde != "darcy" && pde != "burgers") {
    std::cerr << "unsupported pde: " << pde << " (expected darcy or burgers)\n";
    return 2;
  }
  if (n < 2 || test_frac <= 0.0 || test_frac >= 1.0) {
    std::cerr << "gen: need n >= 2 and 0 < test-frac < 1\n";
    return 2;
  }
  const long n_test = std::max(1L, static_cast<long>(std::llround(test_frac * n)));
  const long n_train = n - n_test;

  lsm::Dataset all = lsm::make_dataset(pde, n, extent, seed, gen);
  lsm::Dataset train, test;
  train.meta = all.meta;
  train.meta.n_samples = n_train;
  test.meta = all.meta;
  test.meta.n_samples = n_test;
  for (long i = 0; i < n_train; ++i) {
    train.inputs.push_back(std::move(all.inputs[static_cast<size_t>(i)]));
    train.outputs.push_back(std::move(all.outputs[static_cast<size_t>(i)]));
  }
  for (long i = n_train; i < n; ++i) {
    test.inputs.push_back(std::move(all.inputs[static_cast<size_t>(i)]));
    test.outputs.push_back(std::move(all.outputs[static_cast<size_t>(i)]));
  }
  if (standardize) {
    lsm::compute_standardization(train);
    test.meta.input_mean = train.meta.input_mean;
    test.meta.input_std = train.meta.input_std;
    test.meta.output_mean = train.meta.output_mean;
    test.meta.output_std = train.meta.output_std;
  }
  std::filesystem::create_directories(out_dir);
  lsm::write_dataset(train, out_dir + "/train.lsmd");
  lsm::write_dataset(test, out_dir + "/test.lsmd");
  std::cout << "wrote " << n_train << " train / " << n_test << " test samples to " << out_dir
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, bool no_spectral, bool no_patchify, bool single_scale,
              const std::string& projector, bool normalize_latent, long epochs_override) {
  RunConfig rc = parse_run_config(config_path);
  if (no_spectral) rc.model.ablation.use_spectral = false;
  if (no_patchify) rc.model.ablation.use_patchify = false;
  if (single_scale) rc.model.ablation.single_scale = true;
  if (normalize_latent) rc.model.ablation.normalize_latent = true;
  if (projector == "attention")
    rc.model.ablation.projector_kind = lsm::ProjectorKind::attention;
  else if (projector == "conv")
    rc.model.ablation.projector_kind = lsm::ProjectorKind::conv;
  else if (projector == "avgpool")
    rc.model.ablation.projector_kind = lsm::ProjectorKind::avgpool;
  else if (projector == "none")
    rc.model.ablation.use_projector = false;
  else if (!projector.empty())
    throw std::runtime_error("unknown projector kind: " + projector);
  if (epochs_override >= 0) rc.train.epochs = epochs_override;
  rc.model.validate();

  const lsm::Dataset train_set = lsm::read_dataset(data_dir + "/train.lsmd");
  const lsm::Dataset test_set = lsm::read_dataset(data_dir + "/test.lsmd");
  std::filesystem::create_directories(out_dir);
  rc.train.out_dir = out_dir;

  const lsm::TrainResult res = lsm::train(rc.model, train_set, test_set, rc.train);
  std::cout << "final train loss " << std::scientific << res.report.train_loss.back()
            << ", test mse " << res.report.final_test_mse() << ", wall "
            << std::defaultfloat << res.report.wall_seconds << " s\n"
            << "checkpoint: " << res.report.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& baseline, const std::string& split) {
  const lsm::Dataset test = lsm::read_dataset(data_dir + "/" + split + ".lsmd");
  lsm::EvalMetrics em;
  if (baseline == "mean") {
    const lsm::Dataset train = lsm::read_dataset(data_dir + "/train.lsmd");
    em = lsm::evaluate_mean_baseline(train, test);
  } else if (!baseline.empty()) {
    throw std::runtime_error("unknown baseline: " + baseline);
  } else {
    if (checkpoint.empty()) throw std::runtime_error("eval needs --checkpoint or --baseline");
    em = lsm::evaluate_checkpoint(lsm::load_checkpoint(checkpoint), test);
  }
  const json out = {{"mse", em.mse}, {"rel_l2", em.rel_l2}, {"n_samples", em.n_samples}};
  std::cout << out.dump() << "\n";
  return 0;
}

// Deliberately wrong adjoint (d sin -> sin instead of cos); used to prove the
// checker flags a corrupted rule.
lsm::Tensor faulty_sin(const lsm::Tensor& a) {
  lsm::Tensor res = lsm::sin(a.detached());
  lsm::Tape* tp = lsm::Tape::active();
  if (tp && lsm::tracked(a)) {
    const int an = a.node;
    const long n = a.size();
    auto adata = a.data;
    res.node = tp->record([an, n, adata](const std::vector<double>& g, lsm::Tape& t) {
      auto& ga = t.grad_buf(an, n);
      for (long i = 0; i < n; ++i) ga[i] += g[i] * std::sin((*adata)[i]);
    });
    res.tape_id = tp->id();
  }
  return res;
}

int cmd_gradcheck(uint64_t base_seed, long n_seeds, bool inject_fault) {
  using lsm::Tensor;
  struct OpCheck {
    std::string name;
    std::function<lsm::GradcheckReport(std::mt19937_64&)> run;
  };
  auto rnd = [](lsm::Shape shape, std::mt19937_64& rng, double bound = 2.0) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(static_cast<size_t>(lsm::numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
  };

  std::vector<OpCheck> checks;
  auto simple = [&](std::string name, std::function<Tensor(std::vector<Tensor>&)> builder,
                    std::vector<lsm::Shape> shapes, double bound = 2.0) {
    checks.push_back({std::move(name), [builder, shapes, bound, &rnd](std::mt19937_64& rng) {
                        std::vector<Tensor> params;
                        for (const auto& s : shapes) params.push_back(rnd(s, rng, bound));
                        return lsm::gradcheck(builder, std::move(params), 1e-6);
                      }});
  };

  simple("elementwise", [](std::vector<Tensor>& p) {
    return lsm::sum_all(lsm::mul(lsm::add(p[0], p[1]),
                                 lsm::exp(lsm::scale(lsm::sub(p[0], p[1]), 0.25))));
  }, {{3, 4}, {3, 4}});
  simple("trig", [](std::vector<Tensor>& p) {
    return lsm::sum_all(lsm::mul(lsm::sin(p[0]), lsm::cos(p[1])));
  }, {{3, 4}, {3, 4}});
  simple("matmul", [](std::vector<Tensor>& p) {
    return lsm::sum_all(lsm::matmul(p[0], p[1]));
  }, {{3, 5}, {5, 2}});
  simple("softmax_rows", [](std::vector<Tensor>& p) {
    return lsm::sum_all(lsm::mul(lsm::softmax_rows(p[0]), p[1]));
  }, {{4, 6}, {4, 6}});
  simple("conv", [](std::vector<Tensor>& p) {
    const lsm::GridField f = lsm::GridField::wrap({4, 4}, 2, lsm::reshape(p[0], {4, 4, 2}));
    const lsm::GridField o = lsm::conv(f, p[1], 1, 1);
    return lsm::sum_all(lsm::mul(o.values, o.values));
  }, {{32}, {3, 3, 2, 2}});
  simple("pool_max", [](std::vector<Tensor>& p) {
    const lsm::GridField f = lsm::GridField::wrap({4, 4}, 1, lsm::reshape(p[0], {4, 4, 1}));
    const lsm::GridField o = lsm::pool_max(f, 2);
    return lsm::sum_all(lsm::mul(o.values, o.values));
  }, {{16}});
  simple("interpolate", [](std::vector<Tensor>& p) {
    const lsm::GridField f = lsm::GridField::wrap({4, 4}, 1, lsm::reshape(p[0], {4, 4, 1}));
    const lsm::GridField o = lsm::interpolate_linear(f, {7, 7});
    return lsm::sum_all(lsm::mul(o.values, o.values));
  }, {{16}});
  simple("spectral_forward", [](std::vector<Tensor>& p) {
    lsm::SpectralParams sp;
    sp.w0 = p[1];
    sp.w_sin = p[2];
    sp.w_cos = p[3];
    sp.n_basis = 2 * p[2].shape[1];
    const Tensor o = lsm::spectral_forward(p[0], sp);
    return lsm::sum_all(lsm::mul(o, o));
  }, {{3, 4}, {4}, {1, 3}, {1, 3}});
  // Moderate range: at +-2 the attention logits saturate the softmax and
  // starve gradient coordinates below finite-difference resolution.
  simple("projector_round_trip", [](std::vector<Tensor>& p) {
    lsm::LatentTokenSet toks;
    toks.tokens = p[0];
    lsm::ProjectorParams pp;
    pp.w_k = p[1];
    pp.w_v = p[2];
    pp.w_k_back = p[3];
    pp.w_v_back = p[4];
    const Tensor t_x = lsm::coord_to_latent(toks, p[5], pp);
    const Tensor y = lsm::latent_to_coord(p[5], t_x, pp);
    return lsm::scale(lsm::sum_all(lsm::mul(y, y)), 1e-5);
  }, {{2, 3}, {4, 3}, {4, 3}, {3, 4}, {3, 4}, {6, 4}}, 0.7);
  if (inject_fault)
    simple("faulty_sin(fault injection)", [](std::vector<Tensor>& p) {
      return lsm::sum_all(lsm::mul(faulty_sin(p[0]), p[0]));
    }, {{3, 3}});

  // Full toy model: every parameter of an 8x8, K=2, C=2, N=4 LSM. Weights are
  // moderate random values so all gradient paths stay live, and the loss is
  // scaled so central-difference roundoff stays below the 1e-8 floor of the
  // relative-error denominator.
  checks.push_back({"full_lsm_toy", [&rnd](std::mt19937_64& rng) {
    lsm::LsmConfig cfg;
    cfg.c_tokens = 2;
    cfg.n_basis = 4;
    cfg.k_scales = 2;
    cfg.d_model = {4, 8};
    cfg.d_latent = {4, 8};
    cfg.patches = {4, 1};
    lsm::ModelParams params = lsm::param_init(cfg, rng);
    std::uniform_real_distribution<double> wdist(-0.4, 0.4);
    for (auto& [name, t] : lsm::named_params(params)) {
      auto data = std::make_shared<std::vector<double>>(t->data->size());
      for (auto& v : *data) v = wdist(rng);
      t->data = std::move(data);
    }
    const Tensor xt = rnd({8, 8, 1}, rng);
    const Tensor yt = rnd({8, 8, 1}, rng);
    const lsm::GridField x = lsm::GridField::wrap({8, 8}, 1, xt);
    std::vector<Tensor> flat;
    for (auto& [name, t] : lsm::named_params(params)) flat.push_back(*t);
    auto builder = [cfg, params, x, yt](std::vector<Tensor>& p) mutable {
      lsm::ModelParams live = params;
      auto named = lsm::named_params(live);
      for (size_t i = 0; i < named.size(); ++i) *named[i].second = p[i];
      const lsm::GridField pred = lsm_forward(x, live, cfg);
      const Tensor diff = lsm::sub(pred.values, yt);
      return lsm::scale(lsm::sum_all(lsm::mul(diff, diff)),
                        1e-5 / static_cast<double>(diff.size()));
    };
    return lsm::gradcheck(builder, std::move(flat), 1e-6);
  }});

  bool all_ok = true;
  for (const auto& check : checks) {
    double worst = 0.0;
    bool finite = true;
    for (long s = 0; s < n_seeds; ++s) {
      std::mt19937_64 rng(base_seed + static_cast<uint64_t>(s));
      const lsm::GradcheckReport rep = check.run(rng);
      worst = std::max(worst, rep.max_rel_err);
      finite = finite && rep.finite;
    }
    const bool ok = finite && worst < 1e-5;
    all_ok = all_ok && ok;
    std::cout << (ok ? "PASS " : "FAIL ") << check.name << ": max rel err " << std::scientific
              << worst << " over " << n_seeds << " seeds\n";
  }
  return all_ok ? 0 : 1;
}

int cmd_spectral(const std::string& target, const std::string& n_list_csv, long grid_points,
                 long quad_nodes, const std::string& csv_path) {
  const std::vector<long> n_list = parse_long_list(n_list_csv, "n-list");
  for (long n : n_list)
    if (n < 2 || n % 2 != 0) throw std::runtime_error("n-list entries must be even, got " +
                                                      std::to_string(n));
  lsm::RealFn f;
  lsm::ExtensionMode mode = lsm::ExtensionMode::even;
  if (target == "abs") {
    f = [](double x) { return std::abs(x - M_PI / 2.0); };
  } else if (target == "trigpoly") {
    f = [](double x) { return x + 0.3 + 0.5 * std::sin(2.0 * x) - 0.2 * std::cos(3.0 * x); };
    mode = lsm::ExtensionMode::periodic;  // g = f - x is already 2pi-periodic
  } else if (target == "ramp") {
    f = [](double x) { return x; };
  } else {
    std::cerr << "unknown target: " << target << " (expected abs, trigpoly or ramp)\n";
    return 2;
  }
  const auto pts = lsm::convergence_experiment(f, n_list, grid_points, mode, quad_nodes);

  std::ostringstream csv;
  csv << "N,sup_error\n";
  for (const auto& p : pts) csv << p.n_basis << "," << std::scientific << p.sup_error << "\n";
  std::cout << csv.str();
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    out << csv.str();
  }

  bool ok = true;
  if (target == "abs") {
    for (size_t i = 1; i < pts.size(); ++i) ok = ok && pts[i].sup_error <= pts[i - 1].sup_error;
    if (pts.size() >= 2) {
      const auto& first = pts.front();
      // Find N = 8x the first entry if present; otherwise compare extremes.
      ok = ok && pts.back().sup_error < first.sup_error / 4.0;
      const double base = first.sup_error * static_cast<double>(first.n_basis) /
                          std::log(static_cast<double>(first.n_basis));
      for (const auto& p : pts) {
        const double scaled = p.sup_error * static_cast<double>(p.n_basis) /
                              std::log(static_cast<double>(p.n_basis));
        ok = ok && scaled < 4.0 * base && scaled > base / 4.0;
      }
    }
    std::cout << (ok ? "PASS" : "FAIL")
              << ": sup errors non-increasing, E(max) < E(min)/4, E*N/lnN within factor-4 band\n";
  } else if (target == "trigpoly") {
    for (const auto& p : pts) ok = ok && (p.n_basis < 6 || p.sup_error < 1e-6);
    std::cout << (ok ? "PASS" : "FAIL") << ": exact representation (sup < 1e-6 for N >= 6)\n";
  } else {
    for (const auto& p : pts) ok = ok && p.sup_error < 1e-9;
    std::cout << (ok ? "PASS" : "FAIL") << ": identity residual vanishes (sup < 1e-9)\n";
  }
  return ok ? 0 : 1;
}

int cmd_bench_projector(const std::string& sizes_csv, long reps, long c_tokens, long d_model) {
  const std::vector<long> sizes = parse_long_list(sizes_csv, "sizes");
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto rnd = [&](lsm::Shape s) {
    std::vector<double> v(static_cast<size_t>(lsm::numel(s)));
    for (auto& x : v) x = dist(rng);
    return lsm::Tensor(std::move(s), std::move(v));
  };
  lsm::ProjectorParams params;
  params.w_k = rnd({d_model, d_model});
  params.w_v = rnd({d_model, d_model});
  params.w_k_back = rnd({d_model, d_model});
  params.w_v_back = rnd({d_model, d_model});
  lsm::LatentTokenSet toks;
  toks.tokens = rnd({c_tokens, d_model});

  bool counts_ok = true;
  std::cout << "size,count,median_seconds\n";
  for (long size : sizes) {
    const lsm::Tensor features = rnd({size, d_model});
    // Warm-up, and the count check.
    lsm::SimCounter counter;
    volatile double sink = lsm::coord_to_latent(toks, features, params, &counter).vals()[0];
    (void)sink;
    counts_ok = counts_ok && counter.evals == static_cast<uint64_t>(c_tokens * size);

    std::vector<double> times;
    for (long r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      constexpr long kInner = 3;
      for (long q = 0; q < kInner; ++q) {
        volatile double keep = lsm::coord_to_latent(toks, features, params).vals()[0];
        (void)keep;
      }
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count() /
                      kInner);
    }
    std::sort(times.begin(), times.end());
    std::cout << size << "," << counter.evals << "," << std::scientific
              << times[times.size() / 2] << "\n";
  }
  if (!counts_ok) {
    std::cerr << "FAIL: similarity count != C*|D|\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{"Latent spectral model workbench"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic PDE dataset (train/test split)");
  std::string gen_pde = "darcy", gen_out = "data";
  long gen_n = 250, gen_extent = 32;
  uint64_t gen_seed = 0;
  double gen_test_frac = 0.2;
  bool gen_raw = false;
  lsm::GeneratorParams gp;
  gen->add_option("--pde", gen_pde, "PDE family: darcy or burgers");
  gen->add_option("--n", gen_n, "total sample count");
  gen->add_option("--extent", gen_extent, "grid extent per axis");
  gen->add_option("--seed", gen_seed, "base RNG seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--test-frac", gen_test_frac, "test fraction of n (default 0.2)");
  gen->add_option("--n-modes", gp.n_modes, "GRF modes per axis");
  gen->add_option("--length-scale", gp.length_scale, "GRF spectral decay exponent");
  gen->add_option("--a-low", gp.a_low, "darcy: low coefficient phase");
  gen->add_option("--a-high", gp.a_high, "darcy: high coefficient phase");
  gen->add_option("--forcing", gp.forcing, "darcy: constant forcing");
  gen->add_option("--nu", gp.nu, "burgers: viscosity");
  gen->add_option("--t-final", gp.t_final, "burgers: integration time");
  gen->add_option("--amplitude", gp.amplitude, "burgers: initial condition scale");
  gen->add_flag("--raw", gen_raw, "skip standardization stats");

  // train
  auto* tr = app.add_subcommand("train", "Train a model from a JSON config");
  std::string tr_config, tr_data = "data", tr_out = "runs/out", tr_projector;
  bool tr_no_spectral = false, tr_no_patchify = false, tr_single_scale = false,
       tr_norm_latent = false;
  long tr_epochs = -1;
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--data", tr_data, "dataset directory (train.lsmd/test.lsmd)");
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--epochs", tr_epochs, "override config epochs");
  tr->add_flag("--no-spectral", tr_no_spectral, "disable the neural spectral block");
  tr->add_flag("--no-patchify", tr_no_patchify, "one patch per scale");
  tr->add_flag("--single-scale", tr_single_scale, "disable the multiscale pyramid");
  tr->add_flag("--normalize-latent", tr_norm_latent, "rescale latent tokens to [0, pi]");
  tr->add_option("--projector", tr_projector,
                 "projector kind: attention, conv, avgpool or none");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (or the mean baseline)");
  std::string ev_ck, ev_data = "data", ev_baseline, ev_split = "test";
  ev->add_option("--checkpoint", ev_ck, "checkpoint path");
  ev->add_option("--data", ev_data, "dataset directory");
  ev->add_option("--baseline", ev_baseline, "evaluate a baseline instead: mean");
  ev->add_option("--split", ev_split, "dataset split: test or train");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Check analytic gradients vs central differences");
  uint64_t gc_seed = 0;
  long gc_seeds = 20;
  bool gc_fault = false;
  gc->add_option("--seed", gc_seed, "base seed");
  gc->add_option("--seeds", gc_seeds, "number of seeds per op");
  gc->add_flag("--inject-fault", gc_fault, "add an op with a corrupted adjoint (must FAIL)");

  // spectral
  auto* sp = app.add_subcommand("spectral", "Trigonometric convergence experiment (CSV)");
  std::string sp_target = "abs", sp_nlist = "8,16,32,64,128", sp_csv;
  long sp_grid = 1001, sp_quad = 10000;
  sp->add_option("--target", sp_target, "abs, trigpoly or ramp");
  sp->add_option("--n-list", sp_nlist, "comma-separated even N values");
  sp->add_option("--grid", sp_grid, "sup-error grid points on [0, pi]");
  sp->add_option("--quad", sp_quad, "trapezoid quadrature nodes");
  sp->add_option("--csv", sp_csv, "also write the CSV here");

  // bench-projector
  auto* bp = app.add_subcommand("bench-projector", "Projector complexity: counts and timings");
  std::string bp_sizes = "1024,4096,16384";
  long bp_reps = 9, bp_c = 4, bp_d = 32;
  bp->add_option("--sizes", bp_sizes, "comma-separated coordinate-set sizes");
  bp->add_option("--reps", bp_reps, "timing repetitions (median reported)");
  bp->add_option("--c", bp_c, "latent token count");
  bp->add_option("--d", bp_d, "d_model = d_latent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen(gen_pde, gen_n, gen_extent, gen_seed, gen_test_frac, gen_out, gp, !gen_raw);
    if (tr->parsed())
      return cmd_train(tr_config, tr_data, tr_out, tr_no_spectral, tr_no_patchify,
                       tr_single_scale, tr_projector, tr_norm_latent, tr_epochs);
    if (ev->parsed()) return cmd_eval(ev_ck, ev_data, ev_baseline, ev_split);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_seeds, gc_fault);
    if (sp->parsed()) return cmd_spectral(sp_target, sp_nlist, sp_grid, sp_quad, sp_csv);
    if (bp->parsed()) return cmd_bench_projector(bp_sizes, bp_reps, bp_c, bp_d);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
