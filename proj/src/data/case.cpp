#include "protoseg/data/case.hpp"

#include <cmath>
#include <map>

#include "protoseg/core/error.hpp"
#include "protoseg/io/nifti.hpp"

namespace protoseg::data {
namespace {

std::string strip_nifti_extension(const std::string& name) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0)
      return name.substr(0, name.size() - e.size());
  }
  return {};
}

}  // namespace

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Flair: return "Flair";
    case Modality::T1c: return "T1c";
    case Modality::T1: return "T1";
    case Modality::T2: return "T2";
  }
  return "?";
}

const char* modality_suffix(Modality m) {
  switch (m) {
    case Modality::Flair: return "flair";
    case Modality::T1c: return "t1ce";
    case Modality::T1: return "t1";
    case Modality::T2: return "t2";
  }
  return "?";
}

const char* class_name(int label) {
  static const char* names[] = {"BG", "NCR/NET", "ED", "ET"};
  return (label >= 0 && label < kNumClasses) ? names[label] : "?";
}

std::uint8_t remap_raw_label(double raw) {
  const long v = std::lround(raw);
  if (std::abs(raw - static_cast<double>(v)) > 1e-6) throw LabelDomainError("non-integer label value " + std::to_string(raw));
  switch (v) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default: throw LabelDomainError("label value " + std::to_string(v) + " is not one of {0,1,2,4}");
  }
}

std::uint8_t raw_label(std::uint8_t internal) {
  static const std::uint8_t raw[] = {0, 1, 2, 4};
  if (internal >= kNumClasses) throw LabelDomainError("internal label " + std::to_string(internal) + " out of range");
  return raw[internal];
}

MultiModalCase load_case(const std::filesystem::path& dir, LabelPolicy policy) {
  if (!std::filesystem::is_directory(dir)) throw IoError("case directory not found: " + dir.string());
  std::map<std::string, std::filesystem::path> by_suffix;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = strip_nifti_extension(entry.path().filename().string());
    const auto us = stem.rfind('_');
    if (stem.empty() || us == std::string::npos) continue;
    const std::string suffix = stem.substr(us + 1);
    if (by_suffix.count(suffix))
      throw ShapeMismatch("two files with suffix _" + suffix + " in " + dir.string());
    by_suffix[suffix] = entry.path();
  }

  MultiModalCase c;
  c.case_id = dir.filename().string();
  if (c.case_id.empty()) c.case_id = dir.parent_path().filename().string();
  for (Modality m : kModalities) {
    auto it = by_suffix.find(modality_suffix(m));
    if (it == by_suffix.end())
      throw MissingModality(std::string(modality_name(m)) + " (no *_" + modality_suffix(m) + ".nii[.gz] in " +
                            dir.string() + ")");
    io::NiftiVolume nv = io::read_nifti(it->second);
    ModalVolume& v = c.volumes[static_cast<std::size_t>(m)];
    v.modality = m;
    v.dims = nv.dims;
    v.voxels = std::move(nv.voxels);
    v.brain_mask.resize(v.voxels.size());
    for (std::size_t i = 0; i < v.voxels.size(); ++i) v.brain_mask[i] = v.voxels[i] != 0.0;
    if (m == Modality::Flair) c.spacing = nv.spacing;
    if (!(v.dims == c.volumes[0].dims))
      throw ShapeMismatch(std::string(modality_name(m)) + " is " + to_string(v.dims) + " but Flair is " +
                          to_string(c.volumes[0].dims));
  }

  auto seg = by_suffix.find("seg");
  if (seg != by_suffix.end()) {
    io::NiftiVolume nv = io::read_nifti(seg->second);
    if (!(nv.dims == c.dims()))
      throw ShapeMismatch("labels are " + to_string(nv.dims) + " but images are " + to_string(c.dims()));
    LabelVolume lv{nv.dims, std::vector<std::uint8_t>(nv.voxels.size())};
    for (std::size_t i = 0; i < nv.voxels.size(); ++i) lv.values[i] = remap_raw_label(nv.voxels[i]);
    c.labels = std::move(lv);
  } else if (policy == LabelPolicy::Require) {
    throw MissingModality("labels (no *_seg.nii[.gz] in " + dir.string() + ")");
  }
  return c;
}

void save_case(const MultiModalCase& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Modality m : kModalities) {
    const ModalVolume& v = c.volume(m);
    io::NiftiVolume nv{v.dims, c.spacing, v.voxels};
    io::write_nifti(dir / (c.case_id + "_" + modality_suffix(m) + ".nii.gz"), nv, io::NiftiType::Float32);
  }
  if (c.labels) {
    io::NiftiVolume nv{c.labels->dims, c.spacing, std::vector<double>(c.labels->values.size())};
    for (std::size_t i = 0; i < nv.voxels.size(); ++i) nv.voxels[i] = raw_label(c.labels->values[i]);
    io::write_nifti(dir / (c.case_id + "_seg.nii.gz"), nv, io::NiftiType::UInt8);
  }
}

MultiModalCase normalize_case(const MultiModalCase& c) {
  check_case(c);
  MultiModalCase out = c;
  for (ModalVolume& v : out.volumes) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
      if (v.brain_mask[i]) {
        sum += v.voxels[i];
        ++count;
      }
    if (count == 0) throw EmptyBrainMask(std::string(modality_name(v.modality)) + " of case " + c.case_id);
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
      if (v.brain_mask[i]) sq += (v.voxels[i] - mean) * (v.voxels[i] - mean);
    const double denom = std::sqrt(sq / static_cast<double>(count)) + 1e-8;
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
      v.voxels[i] = v.brain_mask[i] ? (v.voxels[i] - mean) / denom : 0.0;
  }
  return out;
}

void check_case(const MultiModalCase& c) {
  const Dims3 d = c.dims();
  for (const ModalVolume& v : c.volumes) {
    if (!(v.dims == d)) throw ShapeMismatch("modality grids differ in case " + c.case_id);
    if (v.voxels.size() != d.size() || v.brain_mask.size() != d.size())
      throw ShapeMismatch("voxel or mask count does not match " + to_string(d) + " in case " + c.case_id);
  }
  if (c.labels) {
    if (!(c.labels->dims == d) || c.labels->values.size() != d.size())
      throw ShapeMismatch("label grid does not match images in case " + c.case_id);
    for (std::uint8_t l : c.labels->values)
      if (l >= kNumClasses) throw LabelDomainError("internal label " + std::to_string(l) + " in case " + c.case_id);
  }
}

Tensor case_to_tensor(const MultiModalCase& c) {
  Tensor t = Tensor::volume(kNumModalities, c.dims());
  for (int m = 0; m < kNumModalities; ++m) {
    const auto& v = c.volumes[static_cast<std::size_t>(m)].voxels;
    std::copy(v.begin(), v.end(), t.channel(m));
  }
  return t;
}

Tensor one_hot(const LabelVolume& labels) {
  Tensor t = Tensor::volume(kNumClasses, labels.dims);
  const std::size_t S = labels.dims.size();
  for (std::size_t i = 0; i < S; ++i) {
    const std::uint8_t l = labels.values[i];
    if (l >= kNumClasses) throw LabelDomainError("label " + std::to_string(l) + " out of range");
    t[static_cast<std::size_t>(l) * S + i] = 1.0;
  }
  return t;
}

LabelVolume argmax_labels(const Tensor& p) {
  require_volume(p, "argmax_labels");
  const std::size_t S = p.spatial_size();
  LabelVolume out{p.spatial(), std::vector<std::uint8_t>(S, 0)};
  for (std::size_t i = 0; i < S; ++i) {
    int best = 0;
    for (int c = 1; c < p.channels(); ++c)
      if (p[static_cast<std::size_t>(c) * S + i] > p[static_cast<std::size_t>(best) * S + i]) best = c;
    out.values[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace protoseg::data
