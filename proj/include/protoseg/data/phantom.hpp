#pragma once

#include <array>
#include <string>
#include <vector>

#include "protoseg/data/case.hpp"

namespace protoseg::data {

/// Mean intensity per region for one modality. Voxels outside the brain
/// sphere are always exactly 0.
struct IntensityProfile {
  double bg = 1.0;  // healthy brain tissue
  double ncr = 1.0;
  double ed = 1.0;
  double et = 1.0;
};

/// Concentric nested-sphere tumor inside a spherical brain.
struct PhantomSpec {
  Dims3 grid_size{32, 32, 32};
  double center_jitter = 3.0;
  double r_et = 3.0;
  double r_tc = 6.0;
  double r_wt = 10.0;
  /// All three radii are multiplied by one factor drawn from [1 - j, 1 + j].
  double radius_jitter = 0.0;
  /// 0 selects the largest sphere that fits the grid after jitter.
  double brain_radius = 0.0;
  std::array<IntensityProfile, 4> profiles{};
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Throws InvalidSpec unless r_ET < r_TC < r_WT < brain radius and the
  /// jittered brain sphere fits inside the grid.
  void validate() const;
  double resolved_brain_radius() const;
};

/// Radii, jitter and contrasts scaled to a cubic grid of edge `size`.
PhantomSpec default_phantom_spec(int size, std::uint64_t seed);

MultiModalCase generate_phantom(const PhantomSpec& spec, const std::string& case_id = "phantom");

/// `count` cases; case i uses seed spec.seed + i and id "phantom_NNN".
std::vector<MultiModalCase> generate_phantom_set(const PhantomSpec& spec, int count);

}  // namespace protoseg::data
