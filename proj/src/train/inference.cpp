#include "protoseg/train/inference.hpp"

#include <algorithm>

#include "protoseg/autograd/var.hpp"
#include "protoseg/core/error.hpp"
#include "protoseg/data/augment.hpp"

namespace protoseg::train {

Tensor infer_probabilities(const model::Network& net, const Tensor& input, bool tta) {
  ag::NoGradGuard guard;
  if (!tta) return net.predict(input);
  Tensor mean;
  for (int mask = 0; mask < 8; ++mask) {
    const std::array<bool, 3> axes{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    Tensor p = data::flip_tensor(net.predict(data::flip_tensor(input, axes)), axes);
    if (mean.empty()) {
      mean = std::move(p);
    } else {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
    }
  }
  for (double& v : mean.values()) v /= 8.0;
  return mean;
}

std::vector<int> window_origins(int extent, int window) {
  if (window <= 0) throw ConfigError("window must be positive");
  if (extent <= window) return {0};
  const int stride = std::max(1, window / 2);
  std::vector<int> out;
  for (int o = 0; o + window < extent; o += stride) out.push_back(o);
  out.push_back(extent - window);
  return out;
}

namespace {

Tensor extract(const Tensor& x, std::array<int, 3> o, Dims3 size) {
  const int c = x.channels();
  const Dims3 d = x.spatial();
  Tensor out = Tensor::volume(c, size, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int h = 0; h < size.h && o[0] + h < d.h; ++h)
      for (int w = 0; w < size.w && o[1] + w < d.w; ++w)
        for (int z = 0; z < size.d && o[2] + z < d.d; ++z)
          out[((static_cast<std::size_t>(ch) * size.h + h) * size.w + w) * size.d + z] =
              x[((static_cast<std::size_t>(ch) * d.h + o[0] + h) * d.w + o[1] + w) * d.d + o[2] + z];
  return out;
}

}  // namespace

Tensor sliding_window_probabilities(const model::Network& net, const Tensor& input, Dims3 window, bool tta) {
  require_volume(input, "sliding window input");
  const Dims3 d = input.spatial();
  if (d.h == window.h && d.w == window.w && d.d == window.d) return infer_probabilities(net, input, tta);

  const auto oh = window_origins(d.h, window.h), ow = window_origins(d.w, window.w), od = window_origins(d.d, window.d);
  const int classes = data::kNumClasses;
  Tensor acc = Tensor::volume(classes, d, 0.0);
  for (int h0 : oh)
    for (int w0 : ow)
      for (int z0 : od) {
        const Tensor p = infer_probabilities(net, extract(input, {h0, w0, z0}, window), tta);
        for (int h = 0; h < window.h && h0 + h < d.h; ++h)
          for (int w = 0; w < window.w && w0 + w < d.w; ++w)
            for (int z = 0; z < window.d && z0 + z < d.d; ++z) {
              const std::size_t v = (static_cast<std::size_t>(h0 + h) * d.w + w0 + w) * d.d + z0 + z;
              const std::size_t pv = (static_cast<std::size_t>(h) * window.w + w) * window.d + z;
              for (int c = 0; c < classes; ++c) acc[c * d.size() + v] += p[c * window.size() + pv];
            }
      }
  for (std::size_t v = 0; v < d.size(); ++v) {
    double s = 0.0;
    for (int c = 0; c < classes; ++c) s += acc[c * d.size() + v];
    for (int c = 0; c < classes; ++c) acc[c * d.size() + v] /= s;
  }
  return acc;
}

data::LabelVolume segment_case(const model::Network& net, const data::MultiModalCase& c, Dims3 window, bool tta) {
  return data::argmax_labels(sliding_window_probabilities(net, data::case_to_tensor(c), window, tta));
}

}  // namespace protoseg::train
