#include "contrinet/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace contrinet {
namespace {

constexpr const char* kFlowNames[3] = {"rgb", "thermal", "complementary"};

Var combine(const Var& a, const Var& b) { return a.defined() ? ops::add(a, b) : b; }

}  // namespace

Heads::Heads(const ParamBuilder& b, int width, const AblationConfig& ablation) : ablation_(ablation) {
  for (Flow f : ablation.active_flows) {
    const int i = static_cast<int>(f);
    convs_[i] = Conv2d(b.sub(kFlowNames[i]), ConvSpec::square(width, 1, 1));
  }
}

Var Heads::logits(Flow flow, const Var& d1, int out_h, int out_w) const {
  if (!ablation_.has_flow(flow)) throw std::invalid_argument("head for inactive flow " + to_string(flow));
  return ops::resize_bilinear(convs_[static_cast<int>(flow)](d1), out_h, out_w);
}

SaliencyBundle Heads::predict(const std::array<Var, 3>& d1, int out_h, int out_w) const {
  SaliencyBundle bundle;
  for (Flow f : ablation_.active_flows) {
    const int i = static_cast<int>(f);
    bundle.logits[i] = logits(f, d1[i], out_h, out_w);
    bundle.maps[i] = ops::sigmoid(bundle.logits[i]);
  }
  fuse_flows(bundle, ablation_.fusion);
  return bundle;
}

void fuse_flows(SaliencyBundle& bundle, FusionMode mode) {
  Var sum;
  for (int i = 0; i < 3; ++i) {
    if (!bundle.logits[i].defined()) continue;
    sum = combine(sum, mode == FusionMode::kLogits ? bundle.logits[i] : bundle.maps[i]);
  }
  if (!sum.defined()) throw std::invalid_argument("fuse_flows: no active flow");
  if (mode == FusionMode::kLogits) {
    bundle.fused_logits = sum;
    bundle.m_f = ops::sigmoid(sum);
  } else {
    bundle.fused_logits = Var();
    bundle.m_f = ops::clamp(sum, 0.0, 1.0);
  }
}

Tensor pixel_weights(const Tensor& gt) {
  if (gt.c() != 1) throw std::invalid_argument("pixel_weights: expected a single-channel map");
  NoGradGuard no_grad;
  const Tensor box = ops::avg_pool2d(Var::constant(gt), 31, 1, 15, true).value();
  Tensor w(gt.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 1.0 + 5.0 * std::abs(box[i] - gt[i]);
  return w;
}

namespace {

Var loss_terms_logits(const Var& logits, const Tensor& gt, const Tensor& w, LossMode mode) {
  switch (mode) {
    case LossMode::kWbceOnly:
      return ops::weighted_bce_with_logits(logits, gt, w);
    case LossMode::kWiouOnly:
      return ops::weighted_iou_with_logits(logits, gt, w);
    case LossMode::kHybrid:
      break;
  }
  return ops::add(ops::weighted_bce_with_logits(logits, gt, w), ops::weighted_iou_with_logits(logits, gt, w));
}

Var loss_terms_probs(const Var& probs, const Tensor& gt, const Tensor& w, LossMode mode) {
  switch (mode) {
    case LossMode::kWbceOnly:
      return ops::weighted_bce(probs, gt, w);
    case LossMode::kWiouOnly:
      return ops::weighted_iou(probs, gt, w);
    case LossMode::kHybrid:
      break;
  }
  return ops::add(ops::weighted_bce(probs, gt, w), ops::weighted_iou(probs, gt, w));
}

}  // namespace

Var total_loss(const SaliencyBundle& bundle, const Tensor& gt, LossMode mode) {
  const Tensor w = pixel_weights(gt);
  Var total;
  for (int i = 0; i < 3; ++i) {
    if (bundle.logits[i].defined()) total = combine(total, loss_terms_logits(bundle.logits[i], gt, w, mode));
  }
  if (bundle.fused_logits.defined()) {
    total = combine(total, loss_terms_logits(bundle.fused_logits, gt, w, mode));
  } else if (bundle.m_f.defined()) {
    total = combine(total, loss_terms_probs(bundle.m_f, gt, w, mode));
  }
  if (!total.defined()) throw std::invalid_argument("total_loss: empty bundle");
  return total;
}

Var total_loss_from_maps(const std::vector<Var>& maps, const Tensor& gt, LossMode mode) {
  if (maps.empty()) throw std::invalid_argument("total_loss_from_maps: no maps");
  const Tensor w = pixel_weights(gt);
  Var total;
  for (const Var& m : maps) total = combine(total, loss_terms_probs(m, gt, w, mode));
  return total;
}

}  // namespace contrinet
