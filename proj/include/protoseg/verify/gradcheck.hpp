#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "protoseg/autograd/var.hpp"

namespace protoseg::verify {

struct GradCheckOptions {
  double step = 1e-4;
  /// Entries probed per tensor; 0 probes every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double rel_error = 0.0;
  std::size_t probed = 0;
};

/// Compares reverse-mode gradients of the scalar `loss()` with central
/// differences for each tensor in `wrt`. The relative error per tensor is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6) over the
/// probed entries. `loss` must be deterministic.
std::vector<GradCheckEntry> gradcheck(const std::function<ag::Var()>& loss,
                                      const std::vector<std::pair<std::string, ag::Var>>& wrt,
                                      const GradCheckOptions& options = {});

double worst_error(const std::vector<GradCheckEntry>& entries);

}  // namespace protoseg::verify
