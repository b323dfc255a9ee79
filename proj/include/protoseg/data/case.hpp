#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protoseg/core/tensor.hpp"

namespace protoseg::data {

enum class Modality { Flair = 0, T1c = 1, T1 = 2, T2 = 3 };
inline constexpr int kNumModalities = 4;
inline constexpr std::array<Modality, 4> kModalities{Modality::Flair, Modality::T1c, Modality::T1, Modality::T2};

/// Display name ("Flair", "T1c", ...).
const char* modality_name(Modality m);
/// File-name suffix in the BraTS layout ("flair", "t1ce", "t1", "t2").
const char* modality_suffix(Modality m);

/// Internal classes: 0 BG, 1 NCR/NET, 2 ED, 3 ET.
inline constexpr int kNumClasses = 4;
const char* class_name(int label);

/// Integer label grid in storage order.
struct LabelVolume {
  Dims3 dims;
  std::vector<std::uint8_t> values;
};

struct ModalVolume {
  Modality modality = Modality::Flair;
  Dims3 dims;
  std::vector<double> voxels;
  std::vector<std::uint8_t> brain_mask;
};

struct MultiModalCase {
  std::string case_id;
  std::array<ModalVolume, 4> volumes;
  std::optional<LabelVolume> labels;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  Dims3 dims() const { return volumes[0].dims; }
  const ModalVolume& volume(Modality m) const { return volumes[static_cast<std::size_t>(m)]; }
};

enum class LabelPolicy { Require, Optional };

/// BraTS raw label {0,1,2,4} -> internal {0,1,2,3}; throws LabelDomainError otherwise.
std::uint8_t remap_raw_label(double raw);
/// Internal {0,1,2,3} -> BraTS raw {0,1,2,4}.
std::uint8_t raw_label(std::uint8_t internal);

/// Reads `<case>_flair`, `<case>_t1ce`, `<case>_t1`, `<case>_t2` and the
/// optional `<case>_seg` NIfTI volumes from `dir`. Modalities are matched by
/// file-name suffix. The case id is the directory name.
MultiModalCase load_case(const std::filesystem::path& dir, LabelPolicy policy);

/// Writes the case in the same layout, labels in raw BraTS coding.
void save_case(const MultiModalCase& c, const std::filesystem::path& dir);

/// Per-modality zero mean and unit (population) variance inside the brain
/// mask; voxels outside the mask become 0.
MultiModalCase normalize_case(const MultiModalCase& c);

/// Validates internal invariants (dims agree, mask sizes, label domain).
void check_case(const MultiModalCase& c);

/// {4, H, W, D} input tensor in Flair, T1c, T1, T2 order.
Tensor case_to_tensor(const MultiModalCase& c);
/// {4, H, W, D} one-hot ground truth.
Tensor one_hot(const LabelVolume& labels);
/// Per-voxel argmax over the channel axis of a {C, H, W, D} field.
LabelVolume argmax_labels(const Tensor& probabilities);

}  // namespace protoseg::data
