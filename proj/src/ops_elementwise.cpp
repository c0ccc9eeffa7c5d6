#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "contrinet/ops.hpp"

namespace contrinet::ops {
namespace {

using Strides = std::array<std::size_t, 4>;

Shape broadcast_shape(const Shape& a, const Shape& b, const char* what) {
  Shape out{};
  for (int d = 0; d < 4; ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      out[d] = a[d];
    } else if (a[d] == 1) {
      out[d] = b[d];
    } else {
      throw std::invalid_argument(std::string(what) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
  }
  return out;
}

Strides broadcast_strides(const Shape& s, const Shape& out) {
  Strides natural{static_cast<std::size_t>(s[1]) * s[2] * s[3], static_cast<std::size_t>(s[2]) * s[3],
                  static_cast<std::size_t>(s[3]), 1};
  Strides st{};
  for (int d = 0; d < 4; ++d) st[d] = (s[d] == 1 && out[d] != 1) ? 0 : natural[d];
  return st;
}

template <typename Fn>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, Fn&& fn) {
  std::size_t o = 0;
  for (int n = 0; n < out[0]; ++n) {
    for (int c = 0; c < out[1]; ++c) {
      for (int h = 0; h < out[2]; ++h) {
        const std::size_t base_a = n * sa[0] + c * sa[1] + h * sa[2];
        const std::size_t base_b = n * sb[0] + c * sb[1] + h * sb[2];
        for (int w = 0; w < out[3]; ++w, ++o) fn(o, base_a + w * sa[3], base_b + w * sb[3]);
      }
    }
  }
}

template <typename Forward, typename GradA, typename GradB>
Var binary(const Var& a, const Var& b, const char* what, Forward forward, GradA grad_a, GradB grad_b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), what);
  if (a.is_meta() || b.is_meta()) return make_result(Tensor::meta(out_shape), {a, b}, nullptr);
  const Strides sa = broadcast_strides(a.shape(), out_shape);
  const Strides sb = broadcast_strides(b.shape(), out_shape);
  Tensor out(out_shape);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for_each_broadcast(out_shape, sa, sb,
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = forward(av[ia], bv[ib]); });
  return make_result(std::move(out), {a, b}, [a, b, out_shape, sa, sb, grad_a, grad_b](const Node& self) {
    const double* g = self.grad.data();
    const double* av = a.value().data();
    const double* bv = b.value().data();
    if (a.requires_grad()) {
      double* ga = a.node()->grad_buffer().data();
      for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        ga[ia] += grad_a(g[o], av[ia], bv[ib]);
      });
    }
    if (b.requires_grad()) {
      double* gb = b.node()->grad_buffer().data();
      for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        gb[ib] += grad_b(g[o], av[ia], bv[ib]);
      });
    }
  });
}

template <typename Forward, typename Derivative>
Var unary(const Var& x, Forward forward, Derivative derivative) {
  if (x.is_meta()) return make_result(Tensor::meta(x.shape()), {x}, nullptr);
  Tensor out(x.shape());
  const double* xv = x.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = forward(xv[i]);
  return make_result(std::move(out), {x}, [x, derivative](const Node& self) {
    double* gx = x.node()->grad_buffer().data();
    const double* xv = x.value().data();
    const double* yv = self.value.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) gx[i] += self.grad[i] * derivative(xv[i], yv[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var scale(const Var& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Shape out_shape = parts.front().shape();
  out_shape[1] = 0;
  bool meta = false;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s[0] != out_shape[0] || s[2] != out_shape[2] || s[3] != out_shape[3]) {
      throw std::invalid_argument("concat_channels: incompatible shapes " + to_string(parts.front().shape()) + " and " +
                                  to_string(s));
    }
    out_shape[1] += s[1];
    meta = meta || p.is_meta();
  }
  if (meta) return make_result(Tensor::meta(out_shape), parts, nullptr);
  Tensor out(out_shape);
  const std::size_t plane = static_cast<std::size_t>(out_shape[2]) * out_shape[3];
  for (int n = 0; n < out_shape[0]; ++n) {
    int offset = 0;
    for (const Var& p : parts) {
      const std::size_t count = p.shape()[1] * plane;
      const double* src = p.value().data() + n * count;
      std::copy(src, src + count, out.data() + (static_cast<std::size_t>(n) * out_shape[1] + offset) * plane);
      offset += p.shape()[1];
    }
  }
  return make_result(std::move(out), parts, [parts, out_shape, plane](const Node& self) {
    for (int n = 0; n < out_shape[0]; ++n) {
      int offset = 0;
      for (const Var& p : parts) {
        const std::size_t count = p.shape()[1] * plane;
        if (p.requires_grad()) {
          const double* src = self.grad.data() + (static_cast<std::size_t>(n) * out_shape[1] + offset) * plane;
          double* dst = p.node()->grad_buffer().data() + n * count;
          for (std::size_t i = 0; i < count; ++i) dst[i] += src[i];
        }
        offset += p.shape()[1];
      }
    }
  });
}

Var narrow_channels(const Var& x, int start, int length) {
  const Shape& s = x.shape();
  if (start < 0 || length < 1 || start + length > s[1]) {
    throw std::invalid_argument("narrow_channels: range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") outside " + to_string(s));
  }
  const Shape out_shape{s[0], length, s[2], s[3]};
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor out(out_shape);
  for (int n = 0; n < s[0]; ++n) {
    const double* src = x.value().data() + (static_cast<std::size_t>(n) * s[1] + start) * plane;
    std::copy(src, src + length * plane, out.data() + static_cast<std::size_t>(n) * length * plane);
  }
  return make_result(std::move(out), {x}, [x, start, length, plane](const Node& self) {
    const Shape& s = x.shape();
    double* gx = x.node()->grad_buffer().data();
    for (int n = 0; n < s[0]; ++n) {
      const double* src = self.grad.data() + static_cast<std::size_t>(n) * length * plane;
      double* dst = gx + (static_cast<std::size_t>(n) * s[1] + start) * plane;
      for (std::size_t i = 0; i < length * plane; ++i) dst[i] += src[i];
    }
  });
}

Var sum(const Var& x) {
  const Shape out_shape{1, 1, 1, 1};
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  Tensor out(out_shape, x.value().sum());
  return make_result(std::move(out), {x}, [x](const Node& self) {
    Tensor& gx = x.node()->grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

}  // namespace contrinet::ops
