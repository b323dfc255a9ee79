#pragma once

// Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer for
// scalar 3-D volumes. Voxels are returned in this library's storage order
// (index (i*nj + j)*nk + k for file axes i, j, k), i.e. transposed from the
// file's i-fastest layout.

#include <array>
#include <filesystem>
#include <vector>

#include "protoseg/core/tensor.hpp"

namespace protoseg::io {

struct NiftiVolume {
  Dims3 dims;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<double> voxels;
};

enum class NiftiType { UInt8, Int16, Float32, Float64 };

/// Reads .nii or .nii.gz (gzip detected from content). Scaling
/// (scl_slope/scl_inter) is applied when scl_slope is nonzero.
NiftiVolume read_nifti(const std::filesystem::path& path);

/// Writes a .nii or, when the name ends in .gz, a gzip-compressed file.
/// Values are rounded for integer types.
void write_nifti(const std::filesystem::path& path, const NiftiVolume& volume, NiftiType type);

}  // namespace protoseg::io
