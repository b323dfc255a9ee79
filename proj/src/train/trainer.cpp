#include "protoseg/train/trainer.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "protoseg/core/error.hpp"
#include "protoseg/loss/losses.hpp"

namespace protoseg::train {

double poly_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.total_epochs)
    throw RangeError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs) + "]");
  if (epoch == cfg.total_epochs) return 0.0;
  return cfg.base_lr * std::pow(1.0 - static_cast<double>(epoch) / cfg.total_epochs, cfg.poly_power);
}

void adam_update(nn::ParamStore& params, AdamState& s, const TrainConfig& cfg, double lr) {
  const auto& entries = params.entries();
  if (s.m.empty()) {
    for (const auto& [name, p] : entries) {
      s.m.emplace_back(p.shape(), 0.0);
      s.v.emplace_back(p.shape(), 0.0);
    }
  }
  ++s.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  const double wd = cfg.weight_decay;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ag::Var p = entries[i].second;
    Tensor& theta = p.mutable_value();
    const Tensor& grad = p.grad();
    Tensor& m = s.m[i];
    Tensor& v = s.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double g = grad.empty() ? 0.0 : grad[j];
      if (!cfg.decoupled_weight_decay) g += wd * theta[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
      if (cfg.decoupled_weight_decay) theta[j] -= lr * wd * theta[j];
      theta[j] -= lr * update;
    }
  }
}

double gradient_norm(const nn::ParamStore& params) {
  double s = 0.0;
  for (const auto& [name, p] : params.entries())
    for (double g : p.grad().values()) s += g * g;
  return std::sqrt(s);
}

std::string format_record(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["L_ctp"] = r.ctp;
  j["L_share"] = r.share;
  j["L_exp"] = r.expert;
  j["L_deep"] = r.deep_supervision;
  j["L_total"] = r.total;
  j["grad_norm"] = r.grad_norm;
  j["clipped"] = r.clipped;
  return j.dump();
}

TrainState::TrainState(const TrainConfig& cfg)
    : network(cfg.model), data_rng(cfg.seed), dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {}

StepRecord train_step(TrainState& state, const std::vector<data::MultiModalCase>& batch, const TrainConfig& cfg,
                      double lr) {
  if (batch.empty()) throw ArityError("train_step needs at least one case");
  nn::ParamStore& params = state.network.params();
  params.zero_grad();
  StepRecord rec;
  rec.step = state.step;
  rec.epoch = state.epoch;
  rec.lr = lr;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& c : batch) {
    if (!c.labels) throw MissingModality("labels for training case " + c.case_id);
    const auto out = state.network.forward(ag::constant(data::case_to_tensor(c)), true, state.dropout_rng);
    const auto l = loss::compute_losses(out, *c.labels, cfg.loss, cfg.model.full_model);
    const double total = l.total.value().item();
    if (!std::isfinite(total))
      throw NonFiniteLoss("loss is " + std::to_string(total) + " at step " + std::to_string(state.step) + " (case " +
                          c.case_id + ")");
    rec.ctp += l.ctp.value().item() * inv_b;
    rec.share += l.share.value().item() * inv_b;
    rec.expert += l.expert.value().item() * inv_b;
    rec.deep_supervision += l.deep_supervision.value().item() * inv_b;
    rec.total += total * inv_b;
    ag::backward(ag::scale(l.total, inv_b));
  }
  rec.grad_norm = gradient_norm(params);
  if (!std::isfinite(rec.grad_norm))
    throw NonFiniteLoss("non-finite gradient at step " + std::to_string(state.step));
  if (cfg.grad_clip_norm > 0.0 && rec.grad_norm > cfg.grad_clip_norm) {
    const double f = cfg.grad_clip_norm / rec.grad_norm;
    for (const auto& [name, p] : params.entries()) {
      ag::Var h = p;
      if (!h.grad().empty())
        for (double& g : h.mutable_grad().values()) g *= f;
    }
    rec.clipped = true;
  }
  adam_update(params, state.adam, cfg, lr);
  ++state.step;
  return rec;
}

Trainer::Trainer(TrainConfig cfg, std::vector<data::MultiModalCase> cases)
    : cfg_(std::move(cfg)), cases_(std::move(cases)), state_((cfg_.validate(), cfg_)) {
  if (cases_.empty()) throw ArityError("training needs at least one case");
  for (const auto& c : cases_) {
    data::check_case(c);
    if (!c.labels) throw MissingModality("labels for training case " + c.case_id);
  }
}

int Trainer::steps_per_epoch() const {
  return static_cast<int>((cases_.size() + static_cast<std::size_t>(cfg_.batch_size) - 1) /
                          static_cast<std::size_t>(cfg_.batch_size));
}

void Trainer::start_epoch_if_needed() {
  if (state_.step % steps_per_epoch() != 0) return;
  state_.epoch = static_cast<int>(state_.step / steps_per_epoch());
  state_.data_rng = Rng(cfg_.seed + static_cast<std::uint64_t>(state_.epoch));
  state_.order.resize(cases_.size());
  std::iota(state_.order.begin(), state_.order.end(), 0);
  for (std::size_t i = state_.order.size(); i > 1; --i)
    std::swap(state_.order[i - 1], state_.order[state_.data_rng.below(i)]);
}

StepRecord Trainer::step() {
  if (finished()) throw RangeError("training already completed " + std::to_string(total_steps()) + " steps");
  start_epoch_if_needed();
  const auto within = static_cast<std::size_t>(state_.step % steps_per_epoch());
  const auto policy = cfg_.resolved_augment_policy();
  std::vector<data::MultiModalCase> batch;
  for (std::size_t b = 0; b < static_cast<std::size_t>(cfg_.batch_size); ++b) {
    const std::size_t pos = within * static_cast<std::size_t>(cfg_.batch_size) + b;
    if (pos >= state_.order.size()) break;
    batch.push_back(data::augment_case(cases_[state_.order[pos]], policy, state_.data_rng));
  }
  return train_step(state_, batch, cfg_, poly_lr(state_.epoch, cfg_));
}

}  // namespace protoseg::train
