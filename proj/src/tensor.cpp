#include "contrinet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace contrinet {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[' << shape[0] << 'x' << shape[1] << 'x' << shape[2] << 'x' << shape[3] << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(const Shape& shape, double fill) : shape_(shape), values_(shape_numel(shape), fill) {}

Tensor::Tensor(const Shape& shape, const std::vector<double>& values)
    : Tensor(shape, Storage(values.begin(), values.end())) {}

Tensor::Tensor(const Shape& shape, Storage values) : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("tensor value count " + std::to_string(values_.size()) +
                                " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::meta(const Shape& shape) {
  Tensor t;
  shape_numel(shape);
  t.shape_ = shape;
  t.meta_ = true;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) {
  if (other.is_meta()) return meta(other.shape());
  return Tensor(other.shape(), 0.0);
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

void Tensor::add_(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "Tensor::add_");
  if (meta_ || other.meta_) return;
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

void Tensor::axpy_(double scale, const Tensor& other) {
  require_same_shape(shape_, other.shape_, "Tensor::axpy_");
  if (meta_ || other.meta_) return;
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace contrinet
