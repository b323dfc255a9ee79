#include "protoseg/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "protoseg/core/error.hpp"

namespace protoseg {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 0) throw ShapeError("negative extent in shape " + to_string(shape));
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

std::string to_string(const Dims3& dims) {
  std::ostringstream os;
  os << dims.h << 'x' << dims.w << 'x' << dims.d;
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, const std::vector<double>& values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != numel(shape_))
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

int Tensor::channels() const {
  require_volume(*this, "tensor");
  return shape_[0];
}

Dims3 Tensor::spatial() const {
  require_volume(*this, "tensor");
  return {shape_[1], shape_[2], shape_[3]};
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_volume(const Tensor& t, const char* what) {
  if (t.rank() != 4)
    throw ShapeError(std::string(what) + ": expected C x H x W x D, got " + to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace protoseg
