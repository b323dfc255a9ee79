#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protoseg/data/case.hpp"

namespace protoseg::io {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::array<std::uint8_t, 3> pixel(int x, int y) const;
};

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

enum class Plane { Axial, Sagittal, Coronal };
inline constexpr std::array<Plane, 3> kPlanes{Plane::Axial, Plane::Sagittal, Plane::Coronal};
const char* plane_name(Plane p);

/// Axial fixes the third (d) axis, sagittal the first (h), coronal the
/// second (w). Returns the slice as a row-major width x height grid plus
/// its extent; rows run from high to low along the vertical axis.
struct SliceGrid {
  int width = 0, height = 0;
  std::vector<std::size_t> voxel;  // volume index of each pixel
};
SliceGrid slice_grid(Dims3 dims, Plane plane, int index);
/// Middle index of the axis a plane fixes.
int mid_index(Dims3 dims, Plane plane);

/// Grayscale slice of `voxels` (min-max scaled over the slice) with label
/// overlay: NCR/NET red, ED green, ET yellow, blended at `alpha`.
/// Background-only labels leave the grayscale image unchanged.
RgbImage overlay_slice(std::span<const double> voxels, Dims3 dims, const data::LabelVolume* labels, Plane plane,
                       int index, double alpha = 0.5);

/// Black-red-yellow-white heat map of a scalar field slice, scaled by its maximum.
RgbImage heatmap_slice(std::span<const double> field, Dims3 dims, Plane plane, int index);

}  // namespace protoseg::io
