#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace contrinet {

/// Shape of a rank-4 feature map: [batch, channels, height, width].
using Shape = std::array<int, 4>;

std::string to_string(const Shape& shape);

/// Cache-line aligned allocation. Vectorised reductions split their work by
/// address, so a fixed alignment keeps results independent of heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;
std::size_t shape_numel(const Shape& shape);

/// Dense rank-4 array of doubles in NCHW order.
///
/// A tensor may also be created in "meta" mode: it carries a shape but no
/// storage. Meta tensors flow through every op so that parameter and MAC
/// counts of large configurations can be computed without allocating them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape, double fill = 0.0);
  Tensor(const Shape& shape, const std::vector<double>& values);
  Tensor(const Shape& shape, Storage values);

  static Tensor meta(const Shape& shape);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  std::size_t numel() const { return meta_ ? shape_numel(shape_) : values_.size(); }
  bool empty() const { return numel() == 0; }
  bool is_meta() const { return meta_; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  Storage& storage() { return values_; }
  const Storage& storage() const { return values_; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  double& at(int n, int c, int h, int w) { return values_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return values_[offset(n, c, h, w)]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  void fill(double value);
  /// this += other, shapes must match.
  void add_(const Tensor& other);
  /// this += scale * other, shapes must match.
  void axpy_(double scale, const Tensor& other);

  bool all_finite() const;
  double sum() const;
  double max_abs() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  Storage values_;
  bool meta_ = false;
};

/// Throws std::invalid_argument naming `what` when shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace contrinet
