#pragma once

#include <array>
#include <utility>

#include "protoseg/core/rng.hpp"
#include "protoseg/data/case.hpp"

namespace protoseg::data {

struct AugmentPolicy {
  Dims3 crop_size{32, 32, 32};
  double flip_prob = 0.5;
  std::pair<double, double> intensity_shift_range{-0.1, 0.1};
  std::pair<double, double> scale_range{0.9, 1.1};
  std::uint64_t seed = 0;

  /// Throws ConfigError for crop sizes not divisible by 16 or inverted intervals.
  void validate() const;
};

/// The random draws of one augmentation, in the order they are applied.
struct AugmentDraw {
  std::array<int, 3> crop_origin{0, 0, 0};
  std::array<bool, 3> flip{false, false, false};
  double scale = 1.0;
  std::array<double, 4> shift{0.0, 0.0, 0.0, 0.0};
};

AugmentDraw draw_augmentation(const MultiModalCase& c, const AugmentPolicy& policy, Rng& rng);

/// crop -> per-axis flips -> global intensity scale -> per-modality additive
/// shift. Crop and flips apply identically to images, masks and labels.
MultiModalCase apply_augmentation(const MultiModalCase& c, const AugmentPolicy& policy, const AugmentDraw& draw);

MultiModalCase augment_case(const MultiModalCase& c, const AugmentPolicy& policy, Rng& rng);

/// Crops every grid of the case to [origin, origin + size).
MultiModalCase crop_case(const MultiModalCase& c, std::array<int, 3> origin, Dims3 size);

/// Reverses the voxel order along the given axes (0 = h, 1 = w, 2 = d) in
/// every channel of a {C, H, W, D} tensor.
Tensor flip_tensor(const Tensor& t, std::array<bool, 3> axes);

}  // namespace protoseg::data
