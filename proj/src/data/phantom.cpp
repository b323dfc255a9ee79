#include "protoseg/data/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "protoseg/core/error.hpp"
#include "protoseg/core/rng.hpp"

namespace protoseg::data {
namespace {

double half_extent(Dims3 g) { return 0.5 * std::min({g.h, g.w, g.d}); }

}  // namespace

double PhantomSpec::resolved_brain_radius() const {
  if (brain_radius > 0.0) return brain_radius;
  return half_extent(grid_size) - center_jitter - 0.5;
}

void PhantomSpec::validate() const {
  if (grid_size.h <= 0 || grid_size.w <= 0 || grid_size.d <= 0) throw InvalidSpec("grid size must be positive");
  if (!(r_et > 0.0 && r_et < r_tc && r_tc < r_wt))
    throw InvalidSpec("radii must satisfy 0 < r_ET < r_TC < r_WT, got " + std::to_string(r_et) + ", " +
                      std::to_string(r_tc) + ", " + std::to_string(r_wt));
  if (center_jitter < 0.0 || noise_sigma < 0.0 || radius_jitter < 0.0 || radius_jitter >= 1.0)
    throw InvalidSpec("center_jitter and noise_sigma must be >= 0, radius_jitter in [0, 1)");
  const double brain = resolved_brain_radius();
  if (!(r_wt * (1.0 + radius_jitter) < brain))
    throw InvalidSpec("brain sphere of radius " + std::to_string(brain) + " does not strictly contain r_WT " +
                      std::to_string(r_wt * (1.0 + radius_jitter)));
  if (brain + center_jitter > half_extent(grid_size))
    throw InvalidSpec("brain sphere (radius " + std::to_string(brain) + ", jitter " + std::to_string(center_jitter) +
                      ") does not fit grid " + to_string(grid_size));
}

PhantomSpec default_phantom_spec(int size, std::uint64_t seed) {
  PhantomSpec s;
  s.grid_size = {size, size, size};
  s.center_jitter = 0.1 * size;
  s.r_et = 0.09 * size;
  s.r_tc = 0.18 * size;
  s.r_wt = 0.3 * size;
  s.radius_jitter = 0.1;
  s.noise_sigma = 0.05;
  s.seed = seed;
  s.profiles = {IntensityProfile{1.0, 1.6, 2.4, 1.8}, IntensityProfile{1.0, 0.6, 1.0, 2.6},
                IntensityProfile{1.0, 0.5, 0.8, 1.0}, IntensityProfile{1.0, 2.0, 2.2, 1.4}};
  return s;
}

MultiModalCase generate_phantom(const PhantomSpec& spec, const std::string& case_id) {
  spec.validate();
  Rng rng(spec.seed);
  const Dims3 g = spec.grid_size;
  std::array<double, 3> center{(g.h - 1) / 2.0, (g.w - 1) / 2.0, (g.d - 1) / 2.0};
  for (double& c : center) c += rng.uniform(-spec.center_jitter, spec.center_jitter);
  const double factor = rng.uniform(1.0 - spec.radius_jitter, 1.0 + spec.radius_jitter);
  const double r_et = spec.r_et * factor, r_tc = spec.r_tc * factor, r_wt = spec.r_wt * factor;
  const double r_brain = spec.resolved_brain_radius();

  MultiModalCase c;
  c.case_id = case_id;
  LabelVolume labels{g, std::vector<std::uint8_t>(g.size(), 0)};
  std::vector<std::uint8_t> brain(g.size(), 0);
  for (int i = 0; i < g.h; ++i)
    for (int j = 0; j < g.w; ++j)
      for (int k = 0; k < g.d; ++k) {
        const double r = std::sqrt((i - center[0]) * (i - center[0]) + (j - center[1]) * (j - center[1]) +
                                   (k - center[2]) * (k - center[2]));
        const std::size_t idx = (static_cast<std::size_t>(i) * g.w + j) * g.d + k;
        brain[idx] = r < r_brain;
        labels.values[idx] = r < r_et ? 3 : r < r_tc ? 1 : r < r_wt ? 2 : 0;
      }

  for (std::size_t m = 0; m < 4; ++m) {
    const IntensityProfile& p = spec.profiles[m];
    const double mean_of[4] = {p.bg, p.ncr, p.ed, p.et};
    ModalVolume& v = c.volumes[m];
    v.modality = kModalities[m];
    v.dims = g;
    v.brain_mask = brain;
    v.voxels.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!brain[i]) continue;
      v.voxels[i] = mean_of[labels.values[i]];
      if (spec.noise_sigma > 0.0) v.voxels[i] += rng.normal(0.0, spec.noise_sigma);
    }
  }
  c.labels = std::move(labels);
  return c;
}

std::vector<MultiModalCase> generate_phantom_set(const PhantomSpec& spec, int count) {
  std::vector<MultiModalCase> out;
  for (int i = 0; i < count; ++i) {
    PhantomSpec s = spec;
    s.seed = spec.seed + static_cast<std::uint64_t>(i);
    char id[32];
    std::snprintf(id, sizeof(id), "phantom_%03d", i);
    out.push_back(generate_phantom(s, id));
  }
  return out;
}

}  // namespace protoseg::data
