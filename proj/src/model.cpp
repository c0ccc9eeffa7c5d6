#include "contrinet/model.hpp"

#include <stdexcept>

namespace contrinet {

ContriNet::ContriNet(const ModelConfig& cfg, bool meta)
    : cfg_(validate_config(cfg)), params_(std::make_unique<ParamStore>()) {
  Initializer init(cfg_.training.seed, meta);
  const ParamBuilder root(*params_, init);
  const AblationConfig& a = cfg_.ablation;
  const bool need_rgb = a.has_flow(Flow::kRgb) || a.has_flow(Flow::kComplementary);
  const bool need_thermal = a.has_flow(Flow::kThermal) || a.has_flow(Flow::kComplementary);

  if (a.shared_encoder) {
    rgb_encoder_ = make_encoder(root.sub("encoder"), cfg_);
    thermal_encoder_ = rgb_encoder_;
  } else {
    if (need_rgb) rgb_encoder_ = make_encoder(root.sub("encoder.rgb"), cfg_);
    if (need_thermal) thermal_encoder_ = make_encoder(root.sub("encoder.thermal"), cfg_);
  }
  if (a.has_flow(Flow::kComplementary)) mfm_.emplace(root.sub("mfm"), cfg_);
  if (a.has_flow(Flow::kRgb)) {
    flow_r_ = std::make_unique<DecoderFlow>(root.sub("flow.rgb"), cfg_.encoder_channels, cfg_.decoder_width, a);
  }
  if (a.has_flow(Flow::kThermal)) {
    flow_t_ = std::make_unique<DecoderFlow>(root.sub("flow.thermal"), cfg_.encoder_channels, cfg_.decoder_width, a);
  }
  if (a.has_flow(Flow::kComplementary)) {
    flow_s_ = std::make_unique<ComplementaryFlow>(root.sub("flow.complementary"), root.sub("mdam"),
                                                  cfg_.encoder_channels, cfg_.decoder_width, a);
  }
  heads_ = std::make_unique<Heads>(root.sub("head"), cfg_.decoder_width, a);
}

SaliencyBundle ContriNet::forward(const Var& rgb, const Var& thermal, const ForwardOptions& opt,
                                  ForwardTrace* trace) const {
  const Shape& s = rgb.shape();
  require_same_shape(s, thermal.shape(), "ContriNet input");
  if (s[1] != 3) throw std::invalid_argument("ContriNet: expected 3-channel inputs, got " + to_string(s));
  if (s[2] % 32 != 0 || s[3] % 32 != 0) {
    throw std::invalid_argument("ContriNet: spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                                " is not divisible by 32");
  }
  ForwardTrace local;
  ForwardTrace& t = trace != nullptr ? *trace : local;
  if (rgb_encoder_) t.e_r = rgb_encoder_->forward(rgb, opt);
  if (thermal_encoder_) t.e_t = thermal_encoder_->forward(thermal, opt);

  std::array<Var, 3> d1;
  if (flow_r_) {
    t.d_r = flow_r_->decode(t.e_r, opt);
    d1[static_cast<int>(Flow::kRgb)] = t.d_r[0];
  }
  if (flow_t_) {
    t.d_t = flow_t_->decode(t.e_t, opt);
    d1[static_cast<int>(Flow::kThermal)] = t.d_t[0];
  }
  if (flow_s_) {
    t.e_s = mfm_->forward(t.e_r, t.e_t);
    t.d_s = flow_s_->decode(t.e_s, flow_r_ ? &t.d_r : nullptr, flow_t_ ? &t.d_t : nullptr, opt);
    d1[static_cast<int>(Flow::kComplementary)] = t.d_s[0];
  }
  return heads_->predict(d1, s[2], s[3]);
}

Complexity measure_complexity(const ParamStore& store, const std::function<void()>& forward) {
  Complexity c;
  c.params = store.trainable_count();
  NoGradGuard no_grad;
  ops::reset_mac_count();
  if (forward) forward();
  c.macs = ops::mac_count();
  return c;
}

Complexity count_complexity(const ModelConfig& cfg) {
  const ContriNet model(cfg, true);
  const Shape in{1, 3, model.config().input_size, model.config().input_size};
  return measure_complexity(model.params(), [&] {
    model.forward(Var::constant(Tensor::meta(in)), Var::constant(Tensor::meta(in)), ForwardOptions{});
  });
}

}  // namespace contrinet
