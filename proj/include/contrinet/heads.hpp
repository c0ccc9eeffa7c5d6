#pragma once

#include <array>
#include <vector>

#include "contrinet/config.hpp"
#include "contrinet/layers.hpp"

namespace contrinet {

/// Full-resolution predictions. Entries of inactive flows are undefined.
struct SaliencyBundle {
  std::array<Var, 3> logits;  ///< indexed by Flow
  std::array<Var, 3> maps;    ///< sigmoid(logits)
  Var fused_logits;           ///< sum of active logits (logits fusion only)
  Var m_f;

  const Var& logits_of(Flow f) const { return logits[static_cast<int>(f)]; }
  const Var& map_of(Flow f) const { return maps[static_cast<int>(f)]; }
};

/// 1x1 conv on D_1, bilinear upsampling to the input size, sigmoid.
class Heads {
 public:
  Heads(const ParamBuilder& b, int width, const AblationConfig& ablation);

  Var logits(Flow flow, const Var& d1, int out_h, int out_w) const;
  /// Fills logits/maps of every active flow (d1 indexed by Flow) and fuses.
  SaliencyBundle predict(const std::array<Var, 3>& d1, int out_h, int out_w) const;

 private:
  std::array<Conv2d, 3> convs_;
  AblationConfig ablation_;
};

/// Flow-cooperative fusion. Logits mode: sigmoid(sum of logits); probabilities
/// mode: clamp(sum of maps, 0, 1).
void fuse_flows(SaliencyBundle& bundle, FusionMode mode);

/// omega = 1 + 5 |BoxAvg31(G) - G| (zero padding, divisor 961).
Tensor pixel_weights(const Tensor& gt);

/// Sum of the configured loss terms over every map in the bundle (active flows
/// and M_f), computed from logits where available.
Var total_loss(const SaliencyBundle& bundle, const Tensor& gt, LossMode mode);
/// Same contract over plain probability maps (epsilon-clamped logarithms).
Var total_loss_from_maps(const std::vector<Var>& maps, const Tensor& gt, LossMode mode);

}  // namespace contrinet
