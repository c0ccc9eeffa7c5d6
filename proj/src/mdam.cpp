#include "contrinet/mdam.hpp"

#include <stdexcept>
#include <string>
#include <tuple>

namespace contrinet {

Mdam::Mdam(const ParamBuilder& b, int width, MdamMode mode) : mode_(mode) {
  if (mode == MdamMode::kNone) throw std::invalid_argument("MDAM cannot be built with mdam_mode none");
  if (width % 4 != 0) throw std::invalid_argument("MDAM width must be divisible by 4");
  aggregate_ = Conv2d(b.sub("aggregate"), ConvSpec::square(2 * width, width, 3));
  if (mode != MdamMode::kNoDoe) {
    doe_conv3_ = Conv2d(b.sub("doe.conv3"), ConvSpec::square(width, width, 3));
    doe_conv1_ = Conv2d(b.sub("doe.conv1"), ConvSpec::square(width, width, 1));
  }
  if (mode != MdamMode::kFixedWeights) {
    fc1_ = Conv2d(b.sub("fc1"), ConvSpec::square(width, width / 4, 1));
    fc2_ = Conv2d(b.sub("fc2"), ConvSpec::square(width / 4, 2, 1));
  }
  out_conv_ = Conv2d(b.sub("out"), ConvSpec::square(width, width, 3));
}

Var Mdam::weight_logits(const Var& f_a) const { return fc2_(ops::relu(fc1_(ops::global_avg_pool(f_a)))); }

std::pair<Var, Var> Mdam::dynamic_weights(const Var& f_a) const {
  const Var w = ops::softmax_channels(weight_logits(f_a));
  return {ops::narrow_channels(w, 0, 1), ops::narrow_channels(w, 1, 1)};
}

MdamResult Mdam::forward(const Var& d_r, const Var& d_t, const Var& d_s) const {
  require_same_shape(d_r.shape(), d_s.shape(), "MDAM D_r");
  require_same_shape(d_t.shape(), d_s.shape(), "MDAM D_t");
  MdamResult r;
  r.f_a = aggregate_(ops::concat_channels({ops::mul(d_r, d_s), ops::mul(d_t, d_s)}));
  Var f_te = r.f_a;
  if (mode_ != MdamMode::kNoDoe) {
    r.f_doe = ops::sigmoid(doe_conv1_(doe_conv3_(d_r)));
    f_te = ops::mul(r.f_a, r.f_doe);
  }
  const Var f_st = ops::mul(r.f_a, d_t);
  Var mixed;
  if (mode_ == MdamMode::kFixedWeights) {
    const Shape ws{d_s.shape()[0], 1, 1, 1};
    r.alpha = Var::constant(d_s.is_meta() ? Tensor::meta(ws) : Tensor(ws, 1.0));
    r.beta = r.alpha;
    mixed = ops::add(f_te, f_st);
  } else {
    std::tie(r.alpha, r.beta) = dynamic_weights(r.f_a);
    mixed = ops::add(ops::mul(f_te, r.alpha), ops::mul(f_st, r.beta));
  }
  r.out = ops::add(out_conv_(mixed), d_s);
  return r;
}

ComplementaryFlow::ComplementaryFlow(const ParamBuilder& flow_builder, const ParamBuilder& mdam_builder,
                                     const std::array<int, 5>& encoder_channels, int width,
                                     const AblationConfig& ablation)
    : mode_(ablation.mdam_mode), flow_(flow_builder, encoder_channels, width, ablation) {
  if (mode_ == MdamMode::kNone) return;
  for (int i = 1; i <= 5; ++i) mdams_.emplace_back(mdam_builder.sub("level" + std::to_string(i)), width, mode_);
}

std::array<Var, 5> ComplementaryFlow::decode(const Pyramid& e_s, const std::array<Var, 5>* d_r,
                                             const std::array<Var, 5>* d_t, const ForwardOptions& opt) const {
  if (mode_ == MdamMode::kNone) return flow_.decode(e_s, opt);
  if (d_r == nullptr || d_t == nullptr) {
    throw std::invalid_argument("complementary flow: MDAM needs the rgb and thermal flow outputs");
  }
  std::array<Var, 5> d;
  Var upper;
  for (int i = 5; i >= 1; --i) {
    const Var block_out = flow_.level(i, e_s[i - 1], upper, opt);
    d[i - 1] = mdams_[i - 1].forward((*d_r)[i - 1], (*d_t)[i - 1], block_out).out;
    upper = d[i - 1];
  }
  return d;
}

}  // namespace contrinet
