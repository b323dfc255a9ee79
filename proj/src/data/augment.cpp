#include "protoseg/data/augment.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::data {
namespace {

template <typename T>
std::vector<T> crop_flip(const std::vector<T>& src, Dims3 sd, std::array<int, 3> o, Dims3 cd,
                         std::array<bool, 3> flip) {
  std::vector<T> out(cd.size());
  for (int i = 0; i < cd.h; ++i) {
    const int si = o[0] + (flip[0] ? cd.h - 1 - i : i);
    for (int j = 0; j < cd.w; ++j) {
      const int sj = o[1] + (flip[1] ? cd.w - 1 - j : j);
      const T* row = src.data() + (static_cast<std::size_t>(si) * sd.w + sj) * sd.d + o[2];
      T* dst = out.data() + (static_cast<std::size_t>(i) * cd.w + j) * cd.d;
      if (flip[2])
        for (int k = 0; k < cd.d; ++k) dst[k] = row[cd.d - 1 - k];
      else
        std::copy(row, row + cd.d, dst);
    }
  }
  return out;
}

}  // namespace

void AugmentPolicy::validate() const {
  for (int e : {crop_size.h, crop_size.w, crop_size.d})
    if (e <= 0 || e % 16 != 0)
      throw ConfigError("crop size " + to_string(crop_size) + " must be positive multiples of 16");
  if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must lie in [0, 1]");
  if (intensity_shift_range.first > intensity_shift_range.second || scale_range.first > scale_range.second)
    throw ConfigError("augmentation interval bounds are inverted");
}

AugmentDraw draw_augmentation(const MultiModalCase& c, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  const Dims3 d = c.dims();
  const Dims3 cs = policy.crop_size;
  if (cs.h > d.h || cs.w > d.w || cs.d > d.d)
    throw CropTooLarge("crop " + to_string(cs) + " exceeds case " + c.case_id + " of " + to_string(d));
  AugmentDraw draw;
  draw.crop_origin = {static_cast<int>(rng.below(static_cast<std::uint64_t>(d.h - cs.h + 1))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(d.w - cs.w + 1))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(d.d - cs.d + 1)))};
  for (bool& f : draw.flip) f = rng.bernoulli(policy.flip_prob);
  draw.scale = rng.uniform(policy.scale_range.first, policy.scale_range.second);
  for (double& t : draw.shift) t = rng.uniform(policy.intensity_shift_range.first, policy.intensity_shift_range.second);
  return draw;
}

MultiModalCase apply_augmentation(const MultiModalCase& c, const AugmentPolicy& policy, const AugmentDraw& draw) {
  check_case(c);
  const Dims3 sd = c.dims(), cd = policy.crop_size;
  if (cd.h > sd.h || cd.w > sd.w || cd.d > sd.d)
    throw CropTooLarge("crop " + to_string(cd) + " exceeds case " + c.case_id + " of " + to_string(sd));
  MultiModalCase out;
  out.case_id = c.case_id;
  out.spacing = c.spacing;
  for (std::size_t m = 0; m < 4; ++m) {
    const ModalVolume& src = c.volumes[m];
    ModalVolume& v = out.volumes[m];
    v.modality = src.modality;
    v.dims = cd;
    v.voxels = crop_flip(src.voxels, sd, draw.crop_origin, cd, draw.flip);
    v.brain_mask = crop_flip(src.brain_mask, sd, draw.crop_origin, cd, draw.flip);
    for (double& x : v.voxels) x = draw.scale * x + draw.shift[m];
  }
  if (c.labels) out.labels = LabelVolume{cd, crop_flip(c.labels->values, sd, draw.crop_origin, cd, draw.flip)};
  return out;
}

MultiModalCase augment_case(const MultiModalCase& c, const AugmentPolicy& policy, Rng& rng) {
  return apply_augmentation(c, policy, draw_augmentation(c, policy, rng));
}

MultiModalCase crop_case(const MultiModalCase& c, std::array<int, 3> origin, Dims3 size) {
  check_case(c);
  const Dims3 sd = c.dims();
  if (origin[0] < 0 || origin[1] < 0 || origin[2] < 0 || origin[0] + size.h > sd.h || origin[1] + size.w > sd.w ||
      origin[2] + size.d > sd.d)
    throw CropTooLarge("window " + to_string(size) + " does not fit case " + c.case_id);
  MultiModalCase out;
  out.case_id = c.case_id;
  out.spacing = c.spacing;
  const std::array<bool, 3> none{false, false, false};
  for (std::size_t m = 0; m < 4; ++m) {
    out.volumes[m].modality = c.volumes[m].modality;
    out.volumes[m].dims = size;
    out.volumes[m].voxels = crop_flip(c.volumes[m].voxels, sd, origin, size, none);
    out.volumes[m].brain_mask = crop_flip(c.volumes[m].brain_mask, sd, origin, size, none);
  }
  if (c.labels) out.labels = LabelVolume{size, crop_flip(c.labels->values, sd, origin, size, none)};
  return out;
}

Tensor flip_tensor(const Tensor& t, std::array<bool, 3> axes) {
  require_volume(t, "flip_tensor");
  const Dims3 d = t.spatial();
  Tensor out(t.shape());
  for (int c = 0; c < t.channels(); ++c) {
    const std::vector<double> src(t.channel(c), t.channel(c) + d.size());
    const auto flipped = crop_flip(src, d, {0, 0, 0}, d, axes);
    std::copy(flipped.begin(), flipped.end(), out.channel(c));
  }
  return out;
}

}  // namespace protoseg::data
