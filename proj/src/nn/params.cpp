#include "protoseg/nn/params.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::nn {

Var ParamStore::add(const std::string& path, Tensor value) {
  if (contains(path)) throw ConfigError("duplicate parameter path " + path);
  Var v(std::move(value), true);
  index_[path] = entries_.size();
  entries_.emplace_back(path, v);
  return v;
}

Var ParamStore::uniform(const std::string& path, Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = rng.uniform(-bound, bound);
  return add(path, std::move(t));
}

Var ParamStore::constant(const std::string& path, Shape shape, double value) {
  return add(path, Tensor(std::move(shape), value));
}

const Var& ParamStore::at(const std::string& path) const {
  auto it = index_.find(path);
  if (it == index_.end()) throw ConfigError("unknown parameter " + path);
  return entries_[it->second].second;
}

std::vector<std::pair<std::string, Var>> ParamStore::under(const std::string& prefix) const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& e : entries_)
    if (e.first.compare(0, prefix.size(), prefix) == 0) out.push_back(e);
  return out;
}

std::size_t ParamStore::count_scalars() const { return count_scalars(""); }

std::size_t ParamStore::count_scalars(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& e : under(prefix)) n += e.second.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

}  // namespace protoseg::nn
