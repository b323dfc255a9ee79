#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "protoseg/data/case.hpp"

namespace protoseg::metrics {

struct BinaryMask {
  Dims3 dims;
  std::vector<std::uint8_t> values;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  std::size_t count() const;
};

enum class Region { WT = 0, TC = 1, ET = 2 };
inline constexpr std::array<Region, 3> kRegions{Region::WT, Region::TC, Region::ET};
const char* region_name(Region r);

/// WT = {1,2,3}, TC = {1,3}, ET = {3}.
std::array<BinaryMask, 3> compose_regions(const data::LabelVolume& labels,
                                          std::array<double, 3> spacing = {1.0, 1.0, 1.0});

/// 2|a & b| / (|a| + |b|); 1 when both are empty.
double dice_score(const BinaryMask& a, const BinaryMask& b);

struct Hd95Options {
  /// Value when exactly one mask is empty; defaults to the grid diagonal
  /// sqrt(sum(((n_i - 1) s_i)^2)).
  std::optional<double> empty_penalty;
};

double grid_diagonal(Dims3 dims, std::array<double, 3> spacing);

/// Mask voxels with at least one 6-neighbour outside the mask (voxels on the
/// grid boundary count as surface).
std::vector<std::size_t> surface_voxels(const BinaryMask& m);

/// 95th percentile (linear interpolation) of the pooled directed surface
/// distances a->b and b->a. 0 when both are empty.
double hd95(const BinaryMask& a, const BinaryMask& b, const Hd95Options& options = {});

/// Linear-interpolation percentile of unsorted values, q in [0, 100].
double percentile(std::vector<double> values, double q);

struct RegionReport {
  std::string case_id;
  std::array<double, 3> dice{};
  std::array<double, 3> hd95{};
};

RegionReport evaluate_case(const data::LabelVolume& pred, const data::LabelVolume& truth,
                           std::array<double, 3> spacing = {1.0, 1.0, 1.0}, const Hd95Options& options = {});

/// Mean over cases per region.
RegionReport mean_report(const std::vector<RegionReport>& reports);

/// Columns case_id,region,dice,hd95; one row per case and region followed by
/// three "mean" rows.
void write_report_csv(std::ostream& os, const std::vector<RegionReport>& reports);
/// Same content as a JSON document with "cases" and "mean".
void write_report_json(std::ostream& os, const std::vector<RegionReport>& reports);

}  // namespace protoseg::metrics
