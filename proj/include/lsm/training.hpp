#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "lsm/multiscale.hpp"
#include "lsm/pde_data.hpp"

namespace lsm {

struct LrSchedule {
  enum class Kind { constant, step };
  Kind kind = Kind::constant;
  double gamma = 0.5;
  long every_n_epochs = 100;

  double at_epoch(double base_lr, long epoch) const;
  nlohmann::json to_json() const;
  static LrSchedule from_json(const nlohmann::json& j);
};

struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule schedule;
  std::vector<std::vector<double>> m, v;  // canonical parameter order
};

AdamState make_adam_state(const ModelParams& params, double lr, LrSchedule schedule = {});

// One bias-corrected update at learning rate lr_now; rejects non-finite
// gradients naming the parameter.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& st,
               double lr_now);

// Mean over unmasked coordinates and channels of squared error. The optional
// mask is a 1-channel field of 0/1 weights per coordinate.
Tensor l2_loss(const GridField& pred, const GridField& target, const GridField* mask = nullptr);

double mse_metric(const GridField& pred, const GridField& target);
double rel_l2_metric(const GridField& pred, const GridField& target);

// Per-channel affine standardization captured from a train split.
struct Standardizer {
  std::vector<double> in_mean, in_std, out_mean, out_std;

  static Standardizer from_meta(const DatasetMeta& m);
  bool active() const { return !in_mean.empty(); }
  GridField input(const GridField& f) const;
  GridField output(const GridField& f) const;
  GridField deoutput(const GridField& f) const;
  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

struct EvalMetrics {
  double mse = 0.0;
  double rel_l2 = 0.0;
  long n_samples = 0;
};

// Metrics on raw (de-standardized) fields; samples evaluate in parallel with
// read-only parameters.
EvalMetrics evaluate_model(const LsmConfig& cfg, const ModelParams& params,
                           const Standardizer& stdz, const Dataset& test);
EvalMetrics evaluate_checkpoint(const Checkpoint& ck, const Dataset& test);
// Predicts the train-split mean output field everywhere.
EvalMetrics evaluate_mean_baseline(const Dataset& train, const Dataset& test);

struct TrainOptions {
  long epochs = 500;
  long batch_size = 20;
  double lr = 1e-3;
  LrSchedule schedule;
  uint64_t seed = 0;
  double grad_clip_norm = 0.0;  // 0 disables clipping
  std::string out_dir;          // empty: keep everything in memory
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> test_mse;    // per epoch
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  uint64_t seed = 0;
  nlohmann::json config_echo;

  double final_test_mse() const;
  nlohmann::json to_json() const;
  void write_history_csv(const std::string& path) const;
};

struct TrainResult {
  TrainReport report;
  ModelParams params;
  Standardizer standardizer;
};

// Seeded-shuffle mini-batch loop; logs per-epoch train loss and test MSE,
// checkpoints each epoch when out_dir is set, aborts on non-finite loss with
// the last-good checkpoint retained.
TrainResult train(const LsmConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  const TrainOptions& opt);

}  // namespace lsm
