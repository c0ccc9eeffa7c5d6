#pragma once

#include <array>
#include <utility>

#include "contrinet/config.hpp"
#include "contrinet/encoder.hpp"
#include "contrinet/layers.hpp"

namespace contrinet {

/// One level of the modality-induced feature modulator.
class MfmLevel {
 public:
  /// prev_channels is 0 for level 1 (no cascade input).
  MfmLevel(const ParamBuilder& b, int channels, int prev_channels, int se_reduction, const AblationConfig& ablation);

  /// Cross-guided enhancement: (E_r + E_r * w_t, E_t + E_t * w_r).
  std::pair<Var, Var> enhance(const Var& e_r, const Var& e_t) const;
  Var gate_r(const Var& e_r) const;
  Var gate_t(const Var& e_t) const;
  /// sigmoid(SE(Conv3x3(x))) * x.
  Var recalibrate(const Var& x) const;
  Var channel_gate(const Var& x) const;
  /// Attention-aware fusion of the two recalibrated maps (plain conv of the
  /// concatenation when the attention branch is ablated).
  Var fuse(const Var& se_r, const Var& se_t) const;
  Var spatial_attention(const Var& concatenated) const;
  /// Enhancement (unless ablated), recalibration and fusion: E_i^s.
  Var modulate(const Var& e_r, const Var& e_t) const;
  /// Conv3x3(E_i^s) at level 1, else Conv3x3([E_i^s ; Proj(E_{i-1}^s)]).
  Var cascade(const Var& e_s, const Var& prev_e_s) const;

  int channels() const { return channels_; }

 private:
  struct Gate {
    Conv2d point, spatial;
  };
  Var apply_gate(const Gate& g, const Var& x) const;

  int channels_;
  bool use_cfe_;
  bool use_aff_;
  Gate gate_r_, gate_t_;
  Conv2d se_conv_, se_fc1_, se_fc2_;
  Conv2d fuse_conv_, attention_conv_;
  Conv2d cascade_conv_, cascade_proj_;
  bool has_prev_;
};

class Mfm {
 public:
  Mfm(const ParamBuilder& b, const ModelConfig& cfg);
  /// Fused pyramid; levels run shallow to deep.
  Pyramid forward(const Pyramid& e_r, const Pyramid& e_t) const;
  const MfmLevel& level(int i) const { return levels_.at(i); }

 private:
  std::vector<MfmLevel> levels_;
};

}  // namespace contrinet
