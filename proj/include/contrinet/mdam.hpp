#pragma once

#include <array>

#include "contrinet/config.hpp"
#include "contrinet/layers.hpp"
#include "contrinet/raspm.hpp"

namespace contrinet {

struct MdamResult {
  Var out;
  Var f_a;
  Var f_doe;  ///< undefined in no_doe mode
  Var alpha;  ///< [N, 1, 1, 1]
  Var beta;
};

/// Modality-aware dynamic aggregation of D^r, D^t into D^s.
class Mdam {
 public:
  Mdam(const ParamBuilder& b, int width, MdamMode mode);

  MdamResult forward(const Var& d_r, const Var& d_t, const Var& d_s) const;
  /// Softmax-normalised (alpha, beta) per sample from F_a.
  std::pair<Var, Var> dynamic_weights(const Var& f_a) const;
  /// Logits of the weight head before the softmax, [N, 2, 1, 1].
  Var weight_logits(const Var& f_a) const;

 private:
  MdamMode mode_;
  Conv2d aggregate_, doe_conv3_, doe_conv1_, fc1_, fc2_, out_conv_;
};

/// RASPM chain over E^s with one MDAM per level (RASPM-only when the mode is
/// "none").
class ComplementaryFlow {
 public:
  ComplementaryFlow(const ParamBuilder& flow_builder, const ParamBuilder& mdam_builder,
                    const std::array<int, 5>& encoder_channels, int width, const AblationConfig& ablation);

  std::array<Var, 5> decode(const Pyramid& e_s, const std::array<Var, 5>* d_r, const std::array<Var, 5>* d_t,
                            const ForwardOptions& opt) const;
  const DecoderFlow& flow() const { return flow_; }
  const Mdam& mdam(int i) const { return mdams_.at(i - 1); }

 private:
  MdamMode mode_;
  DecoderFlow flow_;
  std::vector<Mdam> mdams_;
};

}  // namespace contrinet
