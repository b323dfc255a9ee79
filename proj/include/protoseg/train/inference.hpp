#pragma once

#include "protoseg/data/case.hpp"
#include "protoseg/model/network.hpp"

namespace protoseg::train {

/// Class probabilities {4, H, W, D} for an input whose size the network
/// accepts. With `tta`, the mean over all 8 axis-flip combinations, each
/// output flipped back before averaging.
Tensor infer_probabilities(const model::Network& net, const Tensor& input, bool tta);

/// Window origins along one axis: stride window/2, the last window flush
/// with the end. A single origin 0 when extent <= window.
std::vector<int> window_origins(int extent, int window);

/// Tiled inference with `window`-sized crops at 50% overlap. Probabilities
/// of overlapping windows are averaged and renormalized per voxel. Axes
/// shorter than the window are zero-padded (the normalized background).
Tensor sliding_window_probabilities(const model::Network& net, const Tensor& input, Dims3 window, bool tta);

/// Normalized case -> internal labels {0..3}.
data::LabelVolume segment_case(const model::Network& net, const data::MultiModalCase& c, Dims3 window, bool tta);

}  // namespace protoseg::train
