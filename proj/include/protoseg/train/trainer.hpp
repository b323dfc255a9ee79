#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "protoseg/data/case.hpp"
#include "protoseg/model/network.hpp"
#include "protoseg/train/config.hpp"

namespace protoseg::train {

/// base_lr * (1 - epoch / total_epochs)^power; RangeError outside [0, total].
double poly_lr(int epoch, const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m, v;
  long t = 0;
};

/// One Adam update of every parameter from its accumulated gradient.
void adam_update(nn::ParamStore& params, AdamState& state, const TrainConfig& cfg, double lr);

/// Global L2 norm of all parameter gradients.
double gradient_norm(const nn::ParamStore& params);

struct TrainState {
  explicit TrainState(const TrainConfig& cfg);

  model::Network network;
  AdamState adam;
  long step = 0;
  int epoch = 0;
  /// Data order and augmentation draws; reseeded to seed + epoch at each epoch start.
  Rng data_rng;
  /// Dropout masks.
  Rng dropout_rng;
  /// Case order of the current epoch.
  std::vector<std::size_t> order;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double ctp = 0.0, share = 0.0, expert = 0.0, deep_supervision = 0.0, total = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
};

/// One JSON object per line: step, epoch, lr, L_ctp, L_share, L_exp,
/// L_deep, L_total, grad_norm, clipped.
std::string format_record(const StepRecord& r);

/// Forward, loss, backward and Adam update on an already augmented batch.
/// The loss is averaged over the batch. Throws NonFiniteLoss (parameters
/// untouched) when the loss or a gradient is not finite.
StepRecord train_step(TrainState& state, const std::vector<data::MultiModalCase>& batch, const TrainConfig& cfg,
                      double lr);

/// Owns the dataset and schedules epochs, batches, augmentation and LR.
class Trainer {
 public:
  /// `cases` must be normalized and labelled.
  Trainer(TrainConfig cfg, std::vector<data::MultiModalCase> cases);

  int steps_per_epoch() const;
  long total_steps() const { return static_cast<long>(steps_per_epoch()) * cfg_.total_epochs; }
  bool finished() const { return state_.step >= total_steps(); }
  StepRecord step();

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<data::MultiModalCase>& cases() const { return cases_; }

 private:
  void start_epoch_if_needed();

  TrainConfig cfg_;
  std::vector<data::MultiModalCase> cases_;
  TrainState state_;
};

}  // namespace protoseg::train
