#pragma once

#include <map>
#include <string>
#include <vector>

#include "protoseg/autograd/var.hpp"
#include "protoseg/core/rng.hpp"

namespace protoseg::nn {

using ag::Var;

/// Named trainable tensors, keyed by module path ("encoder.flair.block1.unit0.conv.weight").
/// Iteration order is insertion order, which is the order the model creates them.
class ParamStore {
 public:
  /// New parameter drawn from U(-bound, bound).
  Var uniform(const std::string& path, Shape shape, double bound, Rng& rng);
  Var constant(const std::string& path, Shape shape, double value);

  bool contains(const std::string& path) const { return index_.count(path) != 0; }
  const Var& at(const std::string& path) const;
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Parameters whose path starts with `prefix`.
  std::vector<std::pair<std::string, Var>> under(const std::string& prefix) const;
  std::size_t count_scalars() const;
  std::size_t count_scalars(const std::string& prefix) const;
  void zero_grad();

 private:
  Var add(const std::string& path, Tensor value);

  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace protoseg::nn
