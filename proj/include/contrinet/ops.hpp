#pragma once

#include <cstdint>
#include <vector>

#include "contrinet/autograd.hpp"

/// Differentiable tensor operations. Every op accepts meta tensors and then
/// only propagates shapes (and MAC counts for convolutions).
namespace contrinet::ops {

struct Conv2dGeometry {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int dilation_h = 1;
  int dilation_w = 1;
};

Shape conv2d_output_shape(const Shape& input, const Shape& weight, const Conv2dGeometry& g);

/// Cross-correlation. weight is [out, in, kh, kw]; bias (optional, may be an
/// undefined Var) is [1, out, 1, 1].
Var conv2d(const Var& x, const Var& weight, const Var& bias, const Conv2dGeometry& g);

/// Per-channel batch normalisation. In training mode batch statistics are
/// used (biased variance) and, if requested, folded into the running
/// estimates with the unbiased variance.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean, Tensor& running_var,
               bool training, bool update_running_stats, double momentum, double eps);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var clamp(const Var& x, double lo, double hi);
Var scale(const Var& x, double factor);

/// Elementwise with broadcasting: each dimension must agree or be 1.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var concat_channels(const std::vector<Var>& parts);
Var narrow_channels(const Var& x, int start, int length);

/// Reductions along the channel axis, output [N, 1, H, W].
Var channel_mean(const Var& x);
Var channel_max(const Var& x);

/// Mean over H and W, output [N, C, 1, 1].
Var global_avg_pool(const Var& x);
/// Adaptive average pooling with floor/ceil bin edges.
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);
Var avg_pool2d(const Var& x, int kernel, int stride, int pad, bool count_include_pad);
Var max_pool2d(const Var& x, int kernel, int stride, int pad);

/// Softmax over the channel axis at every (n, h, w).
Var softmax_channels(const Var& x);

/// Bilinear resampling with half-pixel centres (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);

/// Sum / mean of all elements as a [1, 1, 1, 1] tensor.
Var sum(const Var& x);
Var mean(const Var& x);

/// Hybrid-loss terms over [N, 1, H, W] maps. Each image is normalised by its
/// own weight mass and the batch is averaged. The logit forms are the
/// numerically stable route; the probability forms clamp to [eps, 1 - eps]
/// inside the logarithms only.
Var weighted_bce_with_logits(const Var& logits, const Tensor& target, const Tensor& weight);
Var weighted_iou_with_logits(const Var& logits, const Tensor& target, const Tensor& weight);
Var weighted_bce(const Var& probs, const Tensor& target, const Tensor& weight, double eps = 1e-7);
Var weighted_iou(const Var& probs, const Tensor& target, const Tensor& weight);

/// Multiply-accumulate counter advanced by every convolution on this thread.
std::int64_t mac_count();
void reset_mac_count();

}  // namespace contrinet::ops
