#include "lsm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace lsm {

double LrSchedule::at_epoch(double base_lr, long epoch) const {
  if (kind == Kind::constant) return base_lr;
  return base_lr * std::pow(gamma, static_cast<double>(epoch / every_n_epochs));
}

nlohmann::json LrSchedule::to_json() const {
  if (kind == Kind::constant) return {{"kind", "constant"}};
  return {{"kind", "step"}, {"gamma", gamma}, {"every_n_epochs", every_n_epochs}};
}

LrSchedule LrSchedule::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"kind", "gamma", "every_n_epochs"}, "lr_schedule");
  LrSchedule s;
  const std::string kind = j.value("kind", std::string("constant"));
  if (kind == "constant")
    s.kind = Kind::constant;
  else if (kind == "step")
    s.kind = Kind::step;
  else
    throw std::invalid_argument("lr_schedule: unknown kind \"" + kind + "\"");
  s.gamma = j.value("gamma", s.gamma);
  s.every_n_epochs = j.value("every_n_epochs", s.every_n_epochs);
  if (s.every_n_epochs < 1) throw std::invalid_argument("lr_schedule: every_n_epochs must be >= 1");
  return s;
}

AdamState make_adam_state(const ModelParams& params, double lr, LrSchedule schedule) {
  AdamState st;
  st.lr = lr;
  st.schedule = schedule;
  auto& mp = const_cast<ModelParams&>(params);
  for (auto& [name, t] : named_params(mp)) {
    st.m.emplace_back(static_cast<size_t>(t->size()), 0.0);
    st.v.emplace_back(static_cast<size_t>(t->size()), 0.0);
  }
  return st;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& st,
               double lr_now) {
  auto named = named_params(params);
  if (named.size() != grads.size() || named.size() != st.m.size())
    throw std::invalid_argument("adam_step: gradient/state slot count mismatch");
  for (size_t p = 0; p < named.size(); ++p) {
    if (grads[p].size() != named[p].second->size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + named[p].first);
    for (double g : *grads[p].data)
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient for " + named[p].first);
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t p = 0; p < named.size(); ++p) {
    Tensor* t = named[p].second;
    const auto& g = *grads[p].data;
    auto next = std::make_shared<std::vector<double>>(*t->data);
    auto& m = st.m[p];
    auto& v = st.v[p];
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      (*next)[i] -= lr_now * mhat / (std::sqrt(vhat) + st.eps);
    }
    t->data = std::move(next);
    t->node = -1;  // updated value is a fresh constant
    t->tape_id = 0;
  }
}

Tensor l2_loss(const GridField& pred, const GridField& target, const GridField* mask) {
  if (pred.extents != target.extents || pred.channels != target.channels)
    throw std::invalid_argument("l2_loss: prediction shape " + shape_str(pred.values.shape) +
                                " does not match target " + shape_str(target.values.shape));
  Tensor diff = sub(pred.values, target.values);
  Tensor sq = mul(diff, diff);
  double count = static_cast<double>(sq.size());
  if (mask) {
    if (mask->extents != pred.extents || mask->channels != 1)
      throw std::invalid_argument("l2_loss: mask must be a 1-channel field on the same grid");
    const long c = pred.channels;
    std::vector<double> weights(static_cast<size_t>(sq.size()));
    double active = 0.0;
    const auto& mv = *mask->values.data;
    for (size_t i = 0; i < weights.size(); ++i) {
      weights[i] = mv[i / static_cast<size_t>(c)];
      active += weights[i];
    }
    if (active == 0.0) throw std::invalid_argument("l2_loss: mask excludes every coordinate");
    sq = mul(sq, Tensor(sq.shape, std::move(weights)));
    count = active;
  }
  return scale(sum_all(sq), 1.0 / count);
}

double mse_metric(const GridField& pred, const GridField& target) {
  if (pred.extents != target.extents || pred.channels != target.channels)
    throw std::invalid_argument("mse_metric: shape mismatch " + shape_str(pred.values.shape) +
                                " vs " + shape_str(target.values.shape));
  const auto& p = *pred.values.data;
  const auto& t = *target.values.data;
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return acc / static_cast<double>(p.size());
}

double rel_l2_metric(const GridField& pred, const GridField& target) {
  const auto& p = *pred.values.data;
  const auto& t = *target.values.data;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    num += (p[i] - t[i]) * (p[i] - t[i]);
    den += t[i] * t[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

namespace {
GridField affine_field(const GridField& f, const std::vector<double>& mean,
                       const std::vector<double>& stdev, bool forward) {
  if (mean.empty()) return f;
  if (static_cast<long>(mean.size()) != f.channels)
    throw std::invalid_argument("standardizer: stats cover " + std::to_string(mean.size()) +
                                " channels, field has " + std::to_string(f.channels));
  GridField out = GridField::zeros(f.extents, f.channels);
  const auto& in = *f.values.data;
  auto& ov = *out.values.data;
  const size_t c = static_cast<size_t>(f.channels);
  for (size_t i = 0; i < in.size(); ++i) {
    const size_t ch = i % c;
    ov[i] = forward ? (in[i] - mean[ch]) / stdev[ch] : in[i] * stdev[ch] + mean[ch];
  }
  return out;
}
}  // namespace

Standardizer Standardizer::from_meta(const DatasetMeta& m) {
  Standardizer s;
  s.in_mean = m.input_mean;
  s.in_std = m.input_std;
  s.out_mean = m.output_mean;
  s.out_std = m.output_std;
  return s;
}

GridField Standardizer::input(const GridField& f) const {
  return affine_field(f, in_mean, in_std, true);
}
GridField Standardizer::output(const GridField& f) const {
  return affine_field(f, out_mean, out_std, true);
}
GridField Standardizer::deoutput(const GridField& f) const {
  return affine_field(f, out_mean, out_std, false);
}

nlohmann::json Standardizer::to_json() const {
  return {{"in_mean", in_mean}, {"in_std", in_std}, {"out_mean", out_mean},
          {"out_std", out_std}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  s.in_mean = j.value("in_mean", std::vector<double>{});
  s.in_std = j.value("in_std", std::vector<double>{});
  s.out_mean = j.value("out_mean", std::vector<double>{});
  s.out_std = j.value("out_std", std::vector<double>{});
  return s;
}

EvalMetrics evaluate_model(const LsmConfig& cfg, const ModelParams& params,
                           const Standardizer& stdz, const Dataset& test) {
  if (test.inputs.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const long n = static_cast<long>(test.inputs.size());
  std::vector<double> mse(static_cast<size_t>(n)), rel(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const GridField pred_std =
        lsm_forward(stdz.input(test.inputs[static_cast<size_t>(i)]), params, cfg);
    const GridField pred = stdz.deoutput(pred_std);
    mse[static_cast<size_t>(i)] = mse_metric(pred, test.outputs[static_cast<size_t>(i)]);
    rel[static_cast<size_t>(i)] = rel_l2_metric(pred, test.outputs[static_cast<size_t>(i)]);
  }
  EvalMetrics em;
  em.n_samples = n;
  for (long i = 0; i < n; ++i) {
    em.mse += mse[static_cast<size_t>(i)];
    em.rel_l2 += rel[static_cast<size_t>(i)];
  }
  em.mse /= static_cast<double>(n);
  em.rel_l2 /= static_cast<double>(n);
  return em;
}

EvalMetrics evaluate_checkpoint(const Checkpoint& ck, const Dataset& test) {
  if (test.inputs.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (test.inputs[0].channels != ck.config.d_x ||
      test.outputs[0].channels != ck.config.d_y ||
      test.inputs[0].rank() != ck.config.spatial_rank)
    throw std::invalid_argument(
        "evaluate: checkpoint config (d_x=" + std::to_string(ck.config.d_x) + ", d_y=" +
        std::to_string(ck.config.d_y) + ", rank=" + std::to_string(ck.config.spatial_rank) +
        ") does not match dataset shapes");
  const Standardizer stdz =
      Standardizer::from_json(ck.meta.value("standardizer", nlohmann::json::object()));
  return evaluate_model(ck.config, ck.params, stdz, test);
}

EvalMetrics evaluate_mean_baseline(const Dataset& train, const Dataset& test) {
  if (train.outputs.empty() || test.outputs.empty())
    throw std::invalid_argument("evaluate: empty dataset");
  GridField mean = GridField::zeros(train.outputs[0].extents, train.outputs[0].channels);
  auto& mv = *mean.values.data;
  for (const auto& y : train.outputs) {
    const auto& v = *y.values.data;
    for (size_t i = 0; i < v.size(); ++i) mv[i] += v[i];
  }
  for (auto& v : mv) v /= static_cast<double>(train.outputs.size());
  EvalMetrics em;
  em.n_samples = static_cast<long>(test.outputs.size());
  for (const auto& y : test.outputs) {
    em.mse += mse_metric(mean, y);
    em.rel_l2 += rel_l2_metric(mean, y);
  }
  em.mse /= static_cast<double>(test.outputs.size());
  em.rel_l2 /= static_cast<double>(test.outputs.size());
  return em;
}

double TrainReport::final_test_mse() const {
  return test_mse.empty() ? std::numeric_limits<double>::quiet_NaN() : test_mse.back();
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (size_t e = 0; e < train_loss.size(); ++e)
    hist.push_back({{"epoch", e}, {"train_loss", train_loss[e]}, {"test_mse", test_mse[e]}});
  return {{"seed", seed},
          {"wall_seconds", wall_seconds},
          {"checkpoint", checkpoint_path},
          {"config", config_echo},
          {"history", hist}};
}

void TrainReport::write_history_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,train_loss,test_mse\n";
  for (size_t e = 0; e < train_loss.size(); ++e)
    out << e << "," << std::scientific << train_loss[e] << "," << test_mse[e] << "\n";
}

TrainResult train(const LsmConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  const TrainOptions& opt) {
  cfg.validate();
  if (train_set.inputs.empty() || test_set.inputs.empty())
    throw std::invalid_argument("train: datasets must be non-empty");
  if (train_set.inputs[0].channels != cfg.d_x || train_set.outputs[0].channels != cfg.d_y ||
      train_set.inputs[0].rank() != cfg.spatial_rank)
    throw std::invalid_argument("train: config (d_x=" + std::to_string(cfg.d_x) + ", d_y=" +
                                std::to_string(cfg.d_y) + ", rank=" +
                                std::to_string(cfg.spatial_rank) +
                                ") does not match dataset shapes " +
                                shape_str(train_set.inputs[0].values.shape));
  if (opt.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  const Standardizer stdz = Standardizer::from_meta(train_set.meta);
  const long n_train = static_cast<long>(train_set.inputs.size());
  std::vector<GridField> xs, ys;
  xs.reserve(static_cast<size_t>(n_train));
  ys.reserve(static_cast<size_t>(n_train));
  for (long i = 0; i < n_train; ++i) {
    xs.push_back(stdz.input(train_set.inputs[static_cast<size_t>(i)]));
    ys.push_back(stdz.output(train_set.outputs[static_cast<size_t>(i)]));
  }

  std::mt19937_64 init_rng(opt.seed);
  ModelParams params = param_init(cfg, init_rng);
  AdamState adam = make_adam_state(params, opt.lr, opt.schedule);

  TrainResult result;
  result.report.seed = opt.seed;
  result.report.config_echo = config_to_json(cfg);
  const nlohmann::json ck_meta = {{"standardizer", stdz.to_json()},
                                  {"dataset",
                                   {{"pde_family", train_set.meta.pde_family},
                                    {"resolution", train_set.meta.resolution},
                                    {"seed", train_set.meta.seed}}},
                                  {"train_seed", opt.seed}};
  const std::string ck_path =
      opt.out_dir.empty() ? std::string() : opt.out_dir + "/checkpoint.lsmc";
  auto save = [&]() {
    if (!ck_path.empty()) save_checkpoint(ck_path, cfg, params, ck_meta);
  };
  save();  // epochs == 0 leaves the init checkpoint

  std::vector<long> order(static_cast<size_t>(n_train));
  for (long i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
  std::mt19937_64 shuffle_rng(opt.seed ^ 0x5DEECE66DULL);

  for (long epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr_now = opt.schedule.at_epoch(opt.lr, epoch);
    double loss_sum = 0.0;
    for (long start = 0; start < n_train; start += opt.batch_size) {
      const long stop = std::min(start + opt.batch_size, n_train);
      Tape tape;
      ModelParams live = watched(params, tape);
      Tensor batch_loss;
      for (long b = start; b < stop; ++b) {
        const long i = order[static_cast<size_t>(b)];
        const GridField pred = lsm_forward(xs[static_cast<size_t>(i)], live, cfg);
        const Tensor l = l2_loss(pred, ys[static_cast<size_t>(i)]);
        batch_loss = b == start ? l : add(batch_loss, l);
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      const double loss_val = batch_loss.item();
      if (!std::isfinite(loss_val))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(start / opt.batch_size) +
                                 (ck_path.empty() ? std::string()
                                                  : "; last-good checkpoint: " + ck_path));
      loss_sum += loss_val * static_cast<double>(stop - start);
      Gradients grads = tape.backward(batch_loss);
      std::vector<Tensor> grad_list;
      for (auto& [name, t] : named_params(live)) grad_list.push_back(grads.of(*t));
      if (opt.grad_clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : grad_list)
          for (double v : *g.data) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > opt.grad_clip_norm) {
          const double s = opt.grad_clip_norm / norm;
          for (auto& g : grad_list) g = scale(g, s);
        }
      }
      adam_step(params, grad_list, adam, lr_now);
    }
    result.report.train_loss.push_back(loss_sum / static_cast<double>(n_train));
    const EvalMetrics em = evaluate_model(cfg, params, stdz, test_set);
    result.report.test_mse.push_back(em.mse);
    save();
  }

  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.report.checkpoint_path = ck_path;
  result.params = std::move(params);
  result.standardizer = stdz;
  if (!opt.out_dir.empty()) {
    std::ofstream rep(opt.out_dir + "/report.json");
    rep << result.report.to_json().dump(2) << "\n";
    result.report.write_history_csv(opt.out_dir + "/history.csv");
  }
  return result;
}

}  // namespace lsm
