#pragma once

#include <cstddef>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace protoseg {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Spatial extent of a volume. Storage order is h-major, then w, then d
/// (d is the contiguous axis).
struct Dims3 {
  int h = 0;
  int w = 0;
  int d = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(d);
  }
  bool operator==(const Dims3&) const = default;
};

std::string to_string(const Dims3& dims);

// 64-byte aligned storage. Vectorized reductions peel a prefix up to the
// first aligned element, so a fixed base alignment keeps results
// reproducible from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlignment - 1) / kAlignment * kAlignment;
    void* p = std::aligned_alloc(kAlignment, bytes == 0 ? kAlignment : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of doubles. Feature maps use shape {C, H, W, D},
/// token sequences {N, C}, vectors {C}, scalars {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& values);

  static Tensor scalar(double value) { return Tensor({1}, std::vector<double>{value}); }
  static Tensor volume(int channels, Dims3 dims, double fill = 0.0) {
    return Tensor({channels, dims.h, dims.w, dims.d}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  AlignedVector& storage() noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Channel count and spatial extent for rank-4 feature maps.
  int channels() const;
  Dims3 spatial() const;
  std::size_t spatial_size() const { return spatial().size(); }
  double* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * spatial_size(); }
  const double* channel(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * spatial_size();
  }

  double item() const;
  void fill(double value);
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

 private:
  Shape shape_;
  AlignedVector data_;
};

/// Throws ShapeError unless `t` is a rank-4 feature map.
void require_volume(const Tensor& t, const char* what);
/// Throws ShapeError unless the two shapes are identical.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace protoseg
