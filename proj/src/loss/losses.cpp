#include "protoseg/loss/losses.hpp"

#include <algorithm>
#include <cmath>

#include "protoseg/autograd/ops.hpp"
#include "protoseg/core/error.hpp"
#include "protoseg/model/network.hpp"

namespace protoseg::loss {
namespace {

void require_pred_truth(const Var& pred, const Tensor& truth, const char* what) {
  require_volume(pred.value(), what);
  if (!pred.value().same_shape(truth))
    throw ShapeError(std::string(what) + ": prediction " + to_string(pred.shape()) + " vs truth " +
                     to_string(truth.shape()));
}

Var combined(const Var& pred, const Tensor& truth, const LossConfig& cfg, const std::array<double, 4>& w) {
  return ag::add(weighted_ce(pred, truth, cfg, w), dice_loss(pred, truth, cfg));
}

void require_count(const std::vector<Var>& xs, std::size_t n, const char* what) {
  if (xs.size() != n)
    throw ArityError(std::string(what) + " expects " + std::to_string(n) + " fields, got " + std::to_string(xs.size()));
  for (const Var& x : xs)
    if (!x.defined()) throw ArityError(std::string(what) + ": missing field");
}

}  // namespace

void LossConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("loss epsilon must be > 0");
  bool any = false;
  for (double w : class_weights) {
    if (w < 0.0) throw ConfigError("class weights must be nonnegative");
    any = any || w > 0.0;
  }
  if (!any) throw ConfigError("at least one class weight must be positive");
}

Var dice_loss(const Var& pred, const Tensor& truth, const LossConfig& cfg) {
  require_pred_truth(pred, truth, "dice_loss");
  const Tensor& q = pred.value();
  const int C = q.channels();
  const std::size_t S = q.spatial_size();
  for (std::size_t j = 0; j < S; ++j) {
    double s = 0.0;
    for (int k = 0; k < C; ++k) s += q[static_cast<std::size_t>(k) * S + j];
    if (std::abs(s - 1.0) > 1e-4)
      throw NormalizationError("dice_loss: prediction at voxel " + std::to_string(j) + " sums to " + std::to_string(s));
  }
  const bool squared = cfg.dice_squared_denominator;
  std::vector<double> inter(static_cast<std::size_t>(C), 0.0), denom(static_cast<std::size_t>(C), cfg.epsilon);
  for (int k = 0; k < C; ++k) {
    const double* qk = q.channel(k);
    const double* pk = truth.channel(k);
    for (std::size_t j = 0; j < S; ++j) {
      inter[static_cast<std::size_t>(k)] += pk[j] * qk[j];
      denom[static_cast<std::size_t>(k)] += squared ? pk[j] * pk[j] + qk[j] * qk[j] : pk[j] + qk[j];
    }
  }
  const double factor = cfg.dice_normalize_by_classes ? 1.0 / C : 1.0;
  double terms = 0.0;
  for (int k = 0; k < C; ++k) terms += 2.0 * inter[static_cast<std::size_t>(k)] / denom[static_cast<std::size_t>(k)];
  auto t = std::make_shared<Tensor>(truth);
  return ag::make_result(Tensor::scalar(1.0 - factor * terms), {pred},
                         [t, inter, denom, factor, squared, C, S](ag::Node& self) {
                           const Tensor& q = self.inputs[0]->value;
                           Tensor& g = self.inputs[0]->grad_buffer();
                           const double go = self.grad[0];
                           for (int k = 0; k < C; ++k) {
                             const double I = inter[static_cast<std::size_t>(k)], D = denom[static_cast<std::size_t>(k)];
                             const double* pk = t->channel(k);
                             const double* qk = q.channel(k);
                             double* gk = g.data() + static_cast<std::size_t>(k) * S;
                             for (std::size_t j = 0; j < S; ++j) {
                               const double dd = squared ? 2.0 * qk[j] : 1.0;
                               const double dterm = 2.0 * pk[j] / D - 2.0 * I * dd / (D * D);
                               gk[j] -= go * factor * dterm;
                             }
                           }
                         },
                         "dice_loss");
}

Var weighted_ce(const Var& pred, const Tensor& truth, const LossConfig& cfg, const std::array<double, 4>& w) {
  require_pred_truth(pred, truth, "weighted_ce");
  const Tensor& q = pred.value();
  const int C = q.channels();
  if (C != 4) throw ShapeError("weighted_ce expects 4 classes, got " + to_string(q.shape()));
  const std::size_t S = q.spatial_size();
  const double norm = cfg.wce_mean ? 1.0 / static_cast<double>(S) : 1.0;
  const double floor = cfg.log_floor;
  double total = 0.0;
  for (int k = 0; k < C; ++k) {
    const double wk = w[static_cast<std::size_t>(k)];
    if (wk == 0.0) continue;
    const double* qk = q.channel(k);
    const double* pk = truth.channel(k);
    double s = 0.0;
    for (std::size_t j = 0; j < S; ++j)
      if (pk[j] != 0.0) s += pk[j] * std::log(qk[j] + floor);
    total -= wk * s;
  }
  auto t = std::make_shared<Tensor>(truth);
  return ag::make_result(Tensor::scalar(total * norm), {pred},
                         [t, w, norm, floor, C, S](ag::Node& self) {
                           const Tensor& q = self.inputs[0]->value;
                           Tensor& g = self.inputs[0]->grad_buffer();
                           const double go = self.grad[0] * norm;
                           for (int k = 0; k < C; ++k) {
                             const double wk = w[static_cast<std::size_t>(k)];
                             if (wk == 0.0) continue;
                             const double* qk = q.channel(k);
                             const double* pk = t->channel(k);
                             double* gk = g.data() + static_cast<std::size_t>(k) * S;
                             for (std::size_t j = 0; j < S; ++j)
                               if (pk[j] != 0.0) gk[j] -= go * wk * pk[j] / (qk[j] + floor);
                           }
                         },
                         "weighted_ce");
}

Var weighted_ce(const Var& pred, const Tensor& truth, const LossConfig& cfg) {
  return weighted_ce(pred, truth, cfg, cfg.class_weights);
}

Var upsample_probabilities(const Var& pred, Dims3 dims) {
  if (pred.value().spatial() == dims) return pred;
  return ag::renormalize_channels(ag::resize_trilinear(pred, dims));
}

data::LabelVolume downsample_labels(const data::LabelVolume& labels, Dims3 dims) {
  const Dims3 s = labels.dims;
  data::LabelVolume out{dims, std::vector<std::uint8_t>(dims.size())};
  for (int i = 0; i < dims.h; ++i) {
    const auto si = static_cast<std::size_t>(static_cast<long>(i) * s.h / dims.h);
    for (int j = 0; j < dims.w; ++j) {
      const auto sj = static_cast<std::size_t>(static_cast<long>(j) * s.w / dims.w);
      for (int k = 0; k < dims.d; ++k) {
        const auto sk = static_cast<std::size_t>(static_cast<long>(k) * s.d / dims.d);
        out.values[(static_cast<std::size_t>(i) * dims.w + j) * dims.d + k] = labels.values[(si * s.w + sj) * s.d + sk];
      }
    }
  }
  return out;
}

std::array<double, 4> inverse_frequency_weights(const data::LabelVolume& labels) {
  std::array<double, 4> counts{0, 0, 0, 0};
  for (auto l : labels.values) counts.at(l) += 1.0;
  const double n = static_cast<double>(labels.values.size());
  std::array<double, 4> w{};
  for (std::size_t k = 0; k < 4; ++k) w[k] = counts[k] > 0 ? std::clamp(n / (4.0 * counts[k]), 0.1, 10.0) : 10.0;
  return w;
}

Var ctp_loss(const std::vector<Var>& maps, const data::LabelVolume& truth, const LossConfig& cfg,
             const std::array<double, 4>& w) {
  require_count(maps, 4, "ctp_loss");
  const Tensor p = data::one_hot(truth);
  std::vector<Var> terms;
  for (const Var& m : maps) terms.push_back(combined(upsample_probabilities(m, truth.dims), p, cfg, w));
  return ag::add_n(terms);
}

Var share_loss(const std::vector<Var>& preds, const data::LabelVolume& truth, const LossConfig& cfg,
               const std::array<double, 4>& w) {
  require_count(preds, 5, "share_loss");
  const Tensor p = data::one_hot(truth);
  std::vector<Var> terms;
  for (const Var& q : preds) terms.push_back(combined(q, p, cfg, w));
  return ag::add_n(terms);
}

Var expert_loss(const std::vector<Var>& maps, const data::LabelVolume& truth, const LossConfig& cfg,
                const std::array<double, 4>& w) {
  require_count(maps, 4, "expert_loss");
  const Tensor p = data::one_hot(truth);
  std::vector<Var> terms;
  for (const Var& m : maps) {
    const Tensor native = data::one_hot(downsample_labels(truth, m.value().spatial()));
    terms.push_back(weighted_ce(upsample_probabilities(m, truth.dims), p, cfg, w));
    terms.push_back(dice_loss(m, native, cfg));
  }
  return ag::add_n(terms);
}

Var deep_supervision_loss(const std::vector<Var>& preds, const data::LabelVolume& truth, const LossConfig& cfg,
                          const std::array<double, 4>& w) {
  require_count(preds, 5, "deep_supervision_loss");
  const Tensor p = data::one_hot(truth);
  std::vector<Var> terms;
  for (const Var& q : preds) terms.push_back(combined(upsample_probabilities(q, truth.dims), p, cfg, w));
  return ag::add_n(terms);
}

Var total_loss(const std::vector<Var>& components) {
  require_count(components, 4, "total_loss");
  return ag::add_n(components);
}

LossBreakdown compute_losses(const model::ForwardOutput& out, const data::LabelVolume& truth, const LossConfig& cfg,
                             bool full_model) {
  const auto w = cfg.inverse_frequency_weights ? inverse_frequency_weights(truth) : cfg.class_weights;
  LossBreakdown b;
  const auto& blocks = out.segmentation.block_probabilities;
  b.deep_supervision = deep_supervision_loss(std::vector<Var>(blocks.begin(), blocks.end()), truth, cfg, w);
  if (!full_model) {
    b.ctp = b.share = b.expert = ag::constant(Tensor::scalar(0.0));
    b.total = b.deep_supervision;
    return b;
  }
  b.ctp = ctp_loss(std::vector<Var>(out.ctp.region_maps.begin(), out.ctp.region_maps.end()), truth, cfg, w);
  b.share = share_loss(std::vector<Var>(out.share_outputs.begin(), out.share_outputs.end()), truth, cfg, w);
  b.expert = expert_loss(std::vector<Var>(out.expert_maps.begin(), out.expert_maps.end()), truth, cfg, w);
  b.total = total_loss({b.ctp, b.share, b.expert, b.deep_supervision});
  return b;
}

}  // namespace protoseg::loss
