#pragma once

#include <array>
#include <vector>

#include "protoseg/autograd/var.hpp"
#include "protoseg/data/case.hpp"

namespace protoseg::model {
struct ForwardOutput;
}

namespace protoseg::loss {

using ag::Var;

struct LossConfig {
  /// omega_k for BG, NCR/NET, ED, ET.
  std::array<double, 4> class_weights{1.0, 1.0, 1.0, 1.0};
  /// Recompute omega per batch as N / (4 n_k), clipped to [0.1, 10].
  bool inverse_frequency_weights = false;
  double epsilon = 1e-5;
  /// 1 - mean_k term_k (true) or the literal 1 - sum_k term_k.
  bool dice_normalize_by_classes = true;
  /// Squared denominators sum p^2 + sum q^2 (true) or plain sums.
  bool dice_squared_denominator = true;
  /// Per-voxel mean (true) or the raw sum over voxels.
  bool wce_mean = true;
  double log_floor = 1e-12;

  void validate() const;
};

/// Dice loss of a {4, H, W, D} probability field against a one-hot truth of
/// the same shape. Throws NormalizationError when a voxel's probabilities do
/// not sum to 1 within 1e-4.
Var dice_loss(const Var& pred, const Tensor& truth, const LossConfig& cfg);
/// -sum_k sum_j omega_k p_jk log(q_jk + floor), optionally divided by the voxel count.
Var weighted_ce(const Var& pred, const Tensor& truth, const LossConfig& cfg,
                const std::array<double, 4>& weights);
Var weighted_ce(const Var& pred, const Tensor& truth, const LossConfig& cfg);

/// Trilinear resize of a probability field followed by per-voxel
/// renormalization; identity when the grid already matches.
Var upsample_probabilities(const Var& pred, Dims3 dims);
/// Nearest-neighbour label resampling (source index = floor(i * n_src / n_dst)).
data::LabelVolume downsample_labels(const data::LabelVolume& labels, Dims3 dims);

std::array<double, 4> inverse_frequency_weights(const data::LabelVolume& labels);

/// Sum over the four modalities of WCE + Dice on upsampled region maps.
Var ctp_loss(const std::vector<Var>& maps, const data::LabelVolume& truth, const LossConfig& cfg,
             const std::array<double, 4>& weights);
/// Sum over the five D_share outputs of WCE + Dice at full resolution.
Var share_loss(const std::vector<Var>& preds, const data::LabelVolume& truth, const LossConfig& cfg,
               const std::array<double, 4>& weights);
/// Sum over levels 1..4 of WCE(upsampled map) + Dice(native map, nearest-downsampled truth).
Var expert_loss(const std::vector<Var>& maps, const data::LabelVolume& truth, const LossConfig& cfg,
                const std::array<double, 4>& weights);
/// Sum over the five decoder blocks of WCE + Dice, both on upsampled fields.
Var deep_supervision_loss(const std::vector<Var>& block_preds, const data::LabelVolume& truth,
                          const LossConfig& cfg, const std::array<double, 4>& weights);
/// L_ctp + L_share + L_exp + sum_b L_b; throws ArityError unless all four are defined.
Var total_loss(const std::vector<Var>& components);

struct LossBreakdown {
  Var ctp, share, expert, deep_supervision, total;
};

/// All loss terms of one forward pass. The baseline network contributes only
/// the deep-supervision term.
LossBreakdown compute_losses(const model::ForwardOutput& out, const data::LabelVolume& truth, const LossConfig& cfg,
                             bool full_model);

}  // namespace protoseg::loss
