#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>

#include "contrinet/ops.hpp"

namespace contrinet::ops {
namespace {

std::size_t plane_size(const Shape& s) { return static_cast<std::size_t>(s[2]) * s[3]; }

// Source taps of one output coordinate under half-pixel bilinear sampling.
struct Taps {
  int i0, i1;
  double w0, w1;
};

std::vector<Taps> bilinear_taps(int in, int out) {
  std::vector<Taps> taps(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    const int i0 = std::min(static_cast<int>(src), in - 1);
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double frac = src - i0;
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean, Tensor& running_var,
               bool training, bool update_running_stats, double momentum, double eps) {
  const Shape& s = x.shape();
  const Shape param_shape{1, s[1], 1, 1};
  require_same_shape(gamma.shape(), param_shape, "batch_norm gamma");
  require_same_shape(beta.shape(), param_shape, "batch_norm beta");
  if (x.is_meta()) return make_result(Tensor::meta(s), {x, gamma, beta}, nullptr);

  const int channels = s[1];
  const std::size_t plane = plane_size(s);
  const std::size_t count = static_cast<std::size_t>(s[0]) * plane;
  std::vector<double> mean(channels), inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    if (training) {
      double acc = 0.0;
      for (int n = 0; n < s[0]; ++n) {
        const double* p = x.value().data() + x.value().offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / count;
      double var = 0.0;
      for (int n = 0; n < s[0]; ++n) {
        const double* p = x.value().data() + x.value().offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
      }
      var /= count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      if (update_running_stats) {
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
      }
    } else {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor out(s);
  Tensor normalized(s);
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = x.value().offset(n, c, 0, 0);
      const double g = gamma.value()[c];
      const double b = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (x.value()[base + i] - mean[c]) * inv_std[c];
        normalized[base + i] = xhat;
        out[base + i] = g * xhat + b;
      }
    }
  }

  return make_result(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, normalized = std::move(normalized), inv_std, training, plane,
                      count](const Node& self) {
                       const Shape& s = x.shape();
                       const Tensor& gy = self.grad;
                       for (int c = 0; c < s[1]; ++c) {
                         double sum_g = 0.0, sum_gx = 0.0;
                         for (int n = 0; n < s[0]; ++n) {
                           const std::size_t base = x.value().offset(n, c, 0, 0);
                           for (std::size_t i = 0; i < plane; ++i) {
                             sum_g += gy[base + i];
                             sum_gx += gy[base + i] * normalized[base + i];
                           }
                         }
                         if (gamma.requires_grad()) gamma.node()->grad_buffer()[c] += sum_gx;
                         if (beta.requires_grad()) beta.node()->grad_buffer()[c] += sum_g;
                         if (!x.requires_grad()) continue;
                         Tensor& gx = x.node()->grad_buffer();
                         const double g = gamma.value()[c];
                         for (int n = 0; n < s[0]; ++n) {
                           const std::size_t base = x.value().offset(n, c, 0, 0);
                           for (std::size_t i = 0; i < plane; ++i) {
                             if (training) {
                               gx[base + i] += g * inv_std[c] / count *
                                               (count * gy[base + i] - sum_g - normalized[base + i] * sum_gx);
                             } else {
                               gx[base + i] += g * inv_std[c] * gy[base + i];
                             }
                           }
                         }
                       }
                     });
}

Var channel_mean(const Var& x) {
  const Shape& s = x.shape();
  const Shape out_shape{s[0], 1, s[2], s[3]};
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  const std::size_t plane = plane_size(s);
  Tensor out(out_shape);
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < s[1]; ++c) {
      const double* p = x.value().data() + x.value().offset(n, c, 0, 0);
      double* o = out.data() + n * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] += p[i];
    }
  }
  for (double& v : out.storage()) v /= s[1];
  return make_result(std::move(out), {x}, [x, plane](const Node& self) {
    const Shape& s = x.shape();
    Tensor& gx = x.node()->grad_buffer();
    for (int n = 0; n < s[0]; ++n) {
      const double* g = self.grad.data() + n * plane;
      for (int c = 0; c < s[1]; ++c) {
        double* d = gx.data() + gx.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) d[i] += g[i] / s[1];
      }
    }
  });
}

Var channel_max(const Var& x) {
  const Shape& s = x.shape();
  const Shape out_shape{s[0], 1, s[2], s[3]};
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  const std::size_t plane = plane_size(s);
  Tensor out(out_shape, -std::numeric_limits<double>::infinity());
  std::vector<int> argmax(out.numel(), 0);
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < s[1]; ++c) {
      const double* p = x.value().data() + x.value().offset(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t o = n * plane + i;
        if (p[i] > out[o]) {
          out[o] = p[i];
          argmax[o] = c;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [x, plane, argmax = std::move(argmax)](const Node& self) {
    Tensor& gx = x.node()->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) {
      const int n = static_cast<int>(o / plane);
      gx[gx.offset(n, argmax[o], 0, 0) + o % plane] += self.grad[o];
    }
  });
}

Var global_avg_pool(const Var& x) {
  return adaptive_avg_pool(x, 1, 1);
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
  const Shape& s = x.shape();
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("adaptive_avg_pool: output size must be positive");
  const Shape out_shape{s[0], s[1], out_h, out_w};
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  auto start = [](int o, int in, int out) { return (o * in) / out; };
  auto end = [](int o, int in, int out) { return ((o + 1) * in + out - 1) / out; };
  Tensor out(out_shape);
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < s[1]; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        const int y0 = start(oy, s[2], out_h), y1 = end(oy, s[2], out_h);
        for (int ox = 0; ox < out_w; ++ox) {
          const int x0 = start(ox, s[3], out_w), x1 = end(ox, s[3], out_w);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) acc += x.value().at(n, c, y, xx);
          out.at(n, c, oy, ox) = acc / ((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [x, out_h, out_w, start, end](const Node& self) {
    const Shape& s = x.shape();
    Tensor& gx = x.node()->grad_buffer();
    for (int n = 0; n < s[0]; ++n) {
      for (int c = 0; c < s[1]; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int y0 = start(oy, s[2], out_h), y1 = end(oy, s[2], out_h);
          for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = start(ox, s[3], out_w), x1 = end(ox, s[3], out_w);
            const double g = self.grad.at(n, c, oy, ox) / ((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) gx.at(n, c, y, xx) += g;
          }
        }
      }
    }
  });
}

Var avg_pool2d(const Var& x, int kernel, int stride, int pad, bool count_include_pad) {
  const Shape& s = x.shape();
  if (kernel < 1 || stride < 1 || pad < 0 || 2 * pad > kernel) {
    throw std::invalid_argument("avg_pool2d: invalid geometry");
  }
  const Shape out_shape{s[0], s[1], (s[2] + 2 * pad - kernel) / stride + 1, (s[3] + 2 * pad - kernel) / stride + 1};
  if (out_shape[2] < 1 || out_shape[3] < 1) throw std::invalid_argument("avg_pool2d: input smaller than kernel");
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);

  // Per output position: the clipped window and its divisor.
  auto window = [s, kernel, stride, pad, count_include_pad](int oy, int ox) {
    const int y0 = oy * stride - pad, x0 = ox * stride - pad;
    const int cy0 = std::max(y0, 0), cy1 = std::min(y0 + kernel, s[2]);
    const int cx0 = std::max(x0, 0), cx1 = std::min(x0 + kernel, s[3]);
    const double divisor = count_include_pad ? static_cast<double>(kernel) * kernel
                                             : static_cast<double>((cy1 - cy0) * (cx1 - cx0));
    return std::tuple{cy0, cy1, cx0, cx1, divisor};
  };
  Tensor out(out_shape);
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int oy = 0; oy < out_shape[2]; ++oy)
        for (int ox = 0; ox < out_shape[3]; ++ox) {
          auto [y0, y1, x0, x1, divisor] = window(oy, ox);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) acc += x.value().at(n, c, y, xx);
          out.at(n, c, oy, ox) = acc / divisor;
        }
  return make_result(std::move(out), {x}, [x, out_shape, window](const Node& self) {
    Tensor& gx = x.node()->grad_buffer();
    for (int n = 0; n < out_shape[0]; ++n)
      for (int c = 0; c < out_shape[1]; ++c)
        for (int oy = 0; oy < out_shape[2]; ++oy)
          for (int ox = 0; ox < out_shape[3]; ++ox) {
            auto [y0, y1, x0, x1, divisor] = window(oy, ox);
            const double g = self.grad.at(n, c, oy, ox) / divisor;
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) gx.at(n, c, y, xx) += g;
          }
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int pad) {
  const Shape& s = x.shape();
  if (kernel < 1 || stride < 1 || pad < 0 || 2 * pad > kernel) {
    throw std::invalid_argument("max_pool2d: invalid geometry");
  }
  const Shape out_shape{s[0], s[1], (s[2] + 2 * pad - kernel) / stride + 1, (s[3] + 2 * pad - kernel) / stride + 1};
  if (out_shape[2] < 1 || out_shape[3] < 1) throw std::invalid_argument("max_pool2d: input smaller than kernel");
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  Tensor out(out_shape);
  std::vector<std::size_t> argmax(out.numel());
  std::size_t o = 0;
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int oy = 0; oy < out_shape[2]; ++oy)
        for (int ox = 0; ox < out_shape[3]; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (int y = std::max(oy * stride - pad, 0); y < std::min(oy * stride - pad + kernel, s[2]); ++y)
            for (int xx = std::max(ox * stride - pad, 0); xx < std::min(ox * stride - pad + kernel, s[3]); ++xx) {
              const std::size_t i = x.value().offset(n, c, y, xx);
              if (x.value()[i] > best) {
                best = x.value()[i];
                best_i = i;
              }
            }
          out[o] = best;
          argmax[o] = best_i;
        }
  return make_result(std::move(out), {x}, [x, argmax = std::move(argmax)](const Node& self) {
    Tensor& gx = x.node()->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
  });
}

Var softmax_channels(const Var& x) {
  const Shape& s = x.shape();
  if (x.is_meta()) return make_result(Tensor::meta(s), {x}, nullptr);
  const std::size_t plane = plane_size(s);
  Tensor out(s);
  for (int n = 0; n < s[0]; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < s[1]; ++c) peak = std::max(peak, x.value()[x.value().offset(n, c, 0, 0) + i]);
      double total = 0.0;
      for (int c = 0; c < s[1]; ++c) {
        const std::size_t k = out.offset(n, c, 0, 0) + i;
        out[k] = std::exp(x.value()[k] - peak);
        total += out[k];
      }
      for (int c = 0; c < s[1]; ++c) out[out.offset(n, c, 0, 0) + i] /= total;
    }
  }
  return make_result(std::move(out), {x}, [x, plane](const Node& self) {
    const Shape& s = x.shape();
    Tensor& gx = x.node()->grad_buffer();
    for (int n = 0; n < s[0]; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        double dot = 0.0;
        for (int c = 0; c < s[1]; ++c) {
          const std::size_t k = self.value.offset(n, c, 0, 0) + i;
          dot += self.grad[k] * self.value[k];
        }
        for (int c = 0; c < s[1]; ++c) {
          const std::size_t k = self.value.offset(n, c, 0, 0) + i;
          gx[k] += self.value[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Shape& s = x.shape();
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output size must be positive");
  const Shape out_shape{s[0], s[1], out_h, out_w};
  if (x.is_meta()) return make_result(Tensor::meta(out_shape), {x}, nullptr);
  if (out_h == s[2] && out_w == s[3]) return x;
  auto ty = bilinear_taps(s[2], out_h);
  auto tx = bilinear_taps(s[3], out_w);
  Tensor out(out_shape);
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c) {
      const double* src = x.value().data() + x.value().offset(n, c, 0, 0);
      double* dst = out.data() + out.offset(n, c, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        const Taps& a = ty[oy];
        const double* r0 = src + static_cast<std::size_t>(a.i0) * s[3];
        const double* r1 = src + static_cast<std::size_t>(a.i1) * s[3];
        for (int ox = 0; ox < out_w; ++ox) {
          const Taps& b = tx[ox];
          dst[oy * out_w + ox] =
              a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
        }
      }
    }
  return make_result(std::move(out), {x}, [x, ty = std::move(ty), tx = std::move(tx)](const Node& self) {
    const Shape& s = x.shape();
    const Shape& os = self.value.shape();
    Tensor& gx = x.node()->grad_buffer();
    for (int n = 0; n < s[0]; ++n)
      for (int c = 0; c < s[1]; ++c) {
        double* dst = gx.data() + gx.offset(n, c, 0, 0);
        const double* g = self.grad.data() + self.grad.offset(n, c, 0, 0);
        for (int oy = 0; oy < os[2]; ++oy) {
          const Taps& a = ty[oy];
          for (int ox = 0; ox < os[3]; ++ox) {
            const Taps& b = tx[ox];
            const double v = g[oy * os[3] + ox];
            dst[a.i0 * s[3] + b.i0] += v * a.w0 * b.w0;
            dst[a.i0 * s[3] + b.i1] += v * a.w0 * b.w1;
            dst[a.i1 * s[3] + b.i0] += v * a.w1 * b.w0;
            dst[a.i1 * s[3] + b.i1] += v * a.w1 * b.w1;
          }
        }
      }
  });
}

}  // namespace contrinet::ops
