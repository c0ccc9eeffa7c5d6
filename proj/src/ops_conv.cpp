#include <Eigen/Core>
#include <algorithm>
#include <utility>
#include <stdexcept>
#include <string>

#include "contrinet/ops.hpp"

namespace contrinet::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

thread_local std::int64_t g_macs = 0;

struct ConvDims {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kh, kw;
  Conv2dGeometry g;
  int patch() const { return in_c * kh * kw; }
  int pixels() const { return out_h * out_w; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && g.stride_h == 1 && g.stride_w == 1 && g.pad_h == 0 && g.pad_w == 0;
  }
};

// Output columns [lo, hi) whose input column ix = ox*stride - pad + offset lies inside [0, size).
std::pair<int, int> valid_range(int out, int size, int stride, int pad, int offset) {
  const int shift = pad - offset;
  int lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
  const int last = size - 1 + shift;
  int hi = last < 0 ? 0 : last / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

// cols is [in_c*kh*kw, out_h*out_w], row-major.
void im2col(const double* image, const ConvDims& d, double* cols) {
  const int pixels = d.pixels();
  const int sw = d.g.stride_w;
  for (int c = 0; c < d.in_c; ++c) {
    const double* plane = image + static_cast<std::size_t>(c) * d.in_h * d.in_w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        double* row = cols + static_cast<std::size_t>((c * d.kh + ki) * d.kw + kj) * pixels;
        const int col_off = kj * d.g.dilation_w - d.g.pad_w;
        const auto [lo, hi] = valid_range(d.out_w, d.in_w, sw, d.g.pad_w, kj * d.g.dilation_w);
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.g.stride_h - d.g.pad_h + ki * d.g.dilation_h;
          double* dst = row + static_cast<std::size_t>(oy) * d.out_w;
          if (iy < 0 || iy >= d.in_h) {
            std::fill(dst, dst + d.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * d.in_w + col_off;
          std::fill(dst, dst + lo, 0.0);
          if (sw == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * sw];
          }
          std::fill(dst + hi, dst + d.out_w, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, double* image) {
  const int pixels = d.pixels();
  const int sw = d.g.stride_w;
  for (int c = 0; c < d.in_c; ++c) {
    double* plane = image + static_cast<std::size_t>(c) * d.in_h * d.in_w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const double* row = cols + static_cast<std::size_t>((c * d.kh + ki) * d.kw + kj) * pixels;
        const int col_off = kj * d.g.dilation_w - d.g.pad_w;
        const auto [lo, hi] = valid_range(d.out_w, d.in_w, sw, d.g.pad_w, kj * d.g.dilation_w);
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.g.stride_h - d.g.pad_h + ki * d.g.dilation_h;
          if (iy < 0 || iy >= d.in_h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * d.out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * d.in_w + col_off;
          if (sw == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * sw] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& weight, const Conv2dGeometry& g) {
  if (input[1] != weight[1]) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(input[1]) + " channels, weight expects " +
                                std::to_string(weight[1]));
  }
  if (g.stride_h < 1 || g.stride_w < 1 || g.dilation_h < 1 || g.dilation_w < 1 || g.pad_h < 0 || g.pad_w < 0) {
    throw std::invalid_argument("conv2d: invalid geometry");
  }
  const int eff_h = g.dilation_h * (weight[2] - 1) + 1;
  const int eff_w = g.dilation_w * (weight[3] - 1) + 1;
  const int span_h = input[2] + 2 * g.pad_h - eff_h;
  const int span_w = input[3] + 2 * g.pad_w - eff_w;
  if (span_h < 0 || span_w < 0) {
    throw std::invalid_argument("conv2d: kernel larger than padded input " + to_string(input));
  }
  return {input[0], weight[0], span_h / g.stride_h + 1, span_w / g.stride_w + 1};
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, const Conv2dGeometry& g) {
  const Shape out_shape = conv2d_output_shape(x.shape(), weight.shape(), g);
  if (bias.defined() && bias.shape() != Shape{1, weight.shape()[0], 1, 1}) {
    throw std::invalid_argument("conv2d: bias shape " + to_string(bias.shape()) + " does not match output channels");
  }
  const ConvDims d{x.shape()[1],  x.shape()[2],  x.shape()[3],     out_shape[1], out_shape[2],
                   out_shape[3],  weight.shape()[2], weight.shape()[3], g};
  const int batch = x.shape()[0];
  g_macs += static_cast<std::int64_t>(batch) * d.out_c * d.pixels() * d.patch();

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  if (x.is_meta() || weight.is_meta()) return make_result(Tensor::meta(out_shape), inputs, nullptr);

  Tensor out(out_shape);
  const ConstMatrixMap w(weight.value().data(), d.out_c, d.patch());
  Storage cols(d.pointwise() ? 0 : static_cast<std::size_t>(d.patch()) * d.pixels());
  const std::size_t in_stride = static_cast<std::size_t>(d.in_c) * d.in_h * d.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(d.out_c) * d.pixels();
  for (int n = 0; n < batch; ++n) {
    const double* image = x.value().data() + n * in_stride;
    const double* col_ptr = image;
    if (!d.pointwise()) {
      im2col(image, d, cols.data());
      col_ptr = cols.data();
    }
    MatrixMap o(out.data() + n * out_stride, d.out_c, d.pixels());
    o.noalias() = w * ConstMatrixMap(col_ptr, d.patch(), d.pixels());
    if (bias.defined()) {
      for (int oc = 0; oc < d.out_c; ++oc) o.row(oc).array() += bias.value()[oc];
    }
  }

  return make_result(std::move(out), inputs, [x, weight, bias, d, batch](const Node& self) {
    const Tensor& gout = self.grad;
    const std::size_t in_stride = static_cast<std::size_t>(d.in_c) * d.in_h * d.in_w;
    const std::size_t out_stride = static_cast<std::size_t>(d.out_c) * d.pixels();
    Storage cols(static_cast<std::size_t>(d.patch()) * d.pixels());
    const ConstMatrixMap w(weight.value().data(), d.out_c, d.patch());
    Tensor* gw = weight.requires_grad() ? &weight.node()->grad_buffer() : nullptr;
    Tensor* gx = x.requires_grad() ? &x.node()->grad_buffer() : nullptr;
    for (int n = 0; n < batch; ++n) {
      const ConstMatrixMap go(gout.data() + n * out_stride, d.out_c, d.pixels());
      if (bias.defined() && bias.requires_grad()) {
        Tensor& gb = bias.node()->grad_buffer();
        for (int oc = 0; oc < d.out_c; ++oc) gb[oc] += go.row(oc).sum();
      }
      if (gw != nullptr) {
        const double* image = x.value().data() + n * in_stride;
        const double* col_ptr = image;
        if (!d.pointwise()) {
          im2col(image, d, cols.data());
          col_ptr = cols.data();
        }
        MatrixMap(gw->data(), d.out_c, d.patch()).noalias() +=
            go * ConstMatrixMap(col_ptr, d.patch(), d.pixels()).transpose();
      }
      if (gx != nullptr) {
        double* gimage = gx->data() + n * in_stride;
        if (d.pointwise()) {
          MatrixMap(gimage, d.in_c, d.pixels()).noalias() += w.transpose() * go;
        } else {
          MatrixMap(cols.data(), d.patch(), d.pixels()).noalias() = w.transpose() * go;
          col2im_add(cols.data(), d, gimage);
        }
      }
    }
  });
}

std::int64_t mac_count() { return g_macs; }
void reset_mac_count() { g_macs = 0; }

}  // namespace contrinet::ops
