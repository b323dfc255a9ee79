#include "protoseg/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protoseg/core/rng.hpp"

namespace protoseg::verify {

std::vector<GradCheckEntry> gradcheck(const std::function<ag::Var()>& loss,
                                      const std::vector<std::pair<std::string, ag::Var>>& wrt,
                                      const GradCheckOptions& options) {
  for (const auto& [name, v] : wrt) {
    ag::Var handle = v;
    handle.zero_grad();
  }
  ag::backward(loss());

  Rng rng(options.seed);
  std::vector<GradCheckEntry> out;
  for (const auto& [name, v] : wrt) {
    ag::Var handle = v;
    const std::size_t n = handle.value().size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries && options.max_entries < n) {
      for (std::size_t i = 0; i < options.max_entries; ++i)
        std::swap(idx[i], idx[i + rng.below(n - i)]);
      idx.resize(options.max_entries);
      std::sort(idx.begin(), idx.end());
    }
    const Tensor& g = handle.grad();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      double& x = handle.mutable_value()[i];
      const double saved = x;
      double plus, minus;
      {
        ag::NoGradGuard guard;
        x = saved + options.step;
        plus = loss().value().item();
        x = saved - options.step;
        minus = loss().value().item();
      }
      x = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double analytic = g.empty() ? 0.0 : g[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    out.push_back({name, std::sqrt(diff2) / denom, idx.size()});
  }
  return out;
}

double worst_error(const std::vector<GradCheckEntry>& entries) {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.rel_error);
  return w;
}

}  // namespace protoseg::verify
