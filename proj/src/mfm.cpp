#include "contrinet/mfm.hpp"

#include <stdexcept>
#include <string>

namespace contrinet {

MfmLevel::MfmLevel(const ParamBuilder& b, int channels, int prev_channels, int se_reduction,
                   const AblationConfig& ablation)
    : channels_(channels), use_cfe_(ablation.use_mfm_cfe), use_aff_(ablation.use_mfm_aff), has_prev_(prev_channels > 0) {
  if (se_reduction <= 0 || channels % se_reduction != 0) {
    throw std::invalid_argument("MFM: se_reduction " + std::to_string(se_reduction) + " does not divide " +
                                std::to_string(channels) + " channels");
  }
  const int c = channels;
  if (use_cfe_) {
    gate_r_ = {Conv2d(b.sub("gate_r.conv1"), ConvSpec::square(c, c, 1)),
               Conv2d(b.sub("gate_r.conv3"), ConvSpec::square(c, c, 3))};
    gate_t_ = {Conv2d(b.sub("gate_t.conv1"), ConvSpec::square(c, c, 1)),
               Conv2d(b.sub("gate_t.conv3"), ConvSpec::square(c, c, 3))};
    se_conv_ = Conv2d(b.sub("se.conv"), ConvSpec::square(c, c, 3));
    se_fc1_ = Conv2d(b.sub("se.fc1"), ConvSpec::square(c, c / se_reduction, 1));
    se_fc2_ = Conv2d(b.sub("se.fc2"), ConvSpec::square(c / se_reduction, c, 1));
  }
  fuse_conv_ = Conv2d(b.sub("fuse.conv"), ConvSpec::square(2 * c, c, 3));
  if (use_aff_) attention_conv_ = Conv2d(b.sub("fuse.attention"), ConvSpec::square(2, 1, 7));
  cascade_conv_ = Conv2d(b.sub("cascade.conv"), ConvSpec::square(has_prev_ ? 2 * c : c, c, 3));
  if (has_prev_) {
    ConvSpec proj = ConvSpec::square(prev_channels, c, 1);
    proj.geometry.stride_h = proj.geometry.stride_w = 2;
    cascade_proj_ = Conv2d(b.sub("cascade.proj"), proj);
  }
}

Var MfmLevel::apply_gate(const Gate& g, const Var& x) const { return ops::sigmoid(g.spatial(g.point(x))); }

Var MfmLevel::gate_r(const Var& e_r) const { return apply_gate(gate_r_, e_r); }
Var MfmLevel::gate_t(const Var& e_t) const { return apply_gate(gate_t_, e_t); }

std::pair<Var, Var> MfmLevel::enhance(const Var& e_r, const Var& e_t) const {
  require_same_shape(e_r.shape(), e_t.shape(), "MFM enhance");
  if (!use_cfe_) throw std::logic_error("MFM enhance called with cross-guided enhancement disabled");
  const Var w_r = gate_r(e_r);
  const Var w_t = gate_t(e_t);
  return {ops::add(e_r, ops::mul(e_r, w_t)), ops::add(e_t, ops::mul(e_t, w_r))};
}

Var MfmLevel::channel_gate(const Var& x) const {
  const Var squeezed = ops::global_avg_pool(se_conv_(x));
  return ops::sigmoid(se_fc2_(ops::relu(se_fc1_(squeezed))));
}

Var MfmLevel::recalibrate(const Var& x) const {
  if (!use_cfe_) throw std::logic_error("MFM recalibrate called with cross-guided enhancement disabled");
  return ops::mul(channel_gate(x), x);
}

Var MfmLevel::spatial_attention(const Var& concatenated) const {
  return ops::sigmoid(
      attention_conv_(ops::concat_channels({ops::channel_mean(concatenated), ops::channel_max(concatenated)})));
}

Var MfmLevel::fuse(const Var& se_r, const Var& se_t) const {
  require_same_shape(se_r.shape(), se_t.shape(), "MFM fuse");
  const Var e_tr = ops::concat_channels({se_r, se_t});
  const Var fused = fuse_conv_(e_tr);
  return use_aff_ ? ops::mul(fused, spatial_attention(e_tr)) : fused;
}

Var MfmLevel::modulate(const Var& e_r, const Var& e_t) const {
  if (!use_cfe_) return fuse(e_r, e_t);
  auto [bar_r, bar_t] = enhance(e_r, e_t);
  return fuse(recalibrate(bar_r), recalibrate(bar_t));
}

Var MfmLevel::cascade(const Var& e_s, const Var& prev_e_s) const {
  if (!has_prev_) return cascade_conv_(e_s);
  if (!prev_e_s.defined()) throw std::invalid_argument("MFM cascade: missing previous level");
  return cascade_conv_(ops::concat_channels({e_s, cascade_proj_(prev_e_s)}));
}

Mfm::Mfm(const ParamBuilder& b, const ModelConfig& cfg) {
  for (int i = 0; i < 5; ++i) {
    levels_.emplace_back(b.sub("level" + std::to_string(i + 1)), cfg.encoder_channels[i],
                         i == 0 ? 0 : cfg.encoder_channels[i - 1], cfg.se_reduction, cfg.ablation);
  }
}

Pyramid Mfm::forward(const Pyramid& e_r, const Pyramid& e_t) const {
  Pyramid out;
  Var prev;
  for (int i = 0; i < 5; ++i) {
    const Var e_s = levels_[i].modulate(e_r[i], e_t[i]);
    out[i] = levels_[i].cascade(e_s, prev);
    prev = e_s;
  }
  return out;
}

}  // namespace contrinet
