#include "contrinet/layers.hpp"

#include <cmath>

namespace contrinet {

Tensor Initializer::uniform(const Shape& shape, double bound) {
  if (meta_) return Tensor::meta(shape);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng_);
  return t;
}

Tensor Initializer::constant(const Shape& shape, double value) {
  if (meta_) return Tensor::meta(shape);
  return Tensor(shape, value);
}

ParamBuilder ParamBuilder::sub(const std::string& name) const { return ParamBuilder(*store_, *init_, path(name)); }

std::string ParamBuilder::path(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

Var ParamBuilder::add(const std::string& name, Tensor value, bool trainable) const {
  return store_->add(path(name), std::move(value), trainable);
}

ConvSpec ConvSpec::square(int in, int out, int k, int dilation, bool bias) {
  ConvSpec s;
  s.in = in;
  s.out = out;
  s.kh = s.kw = k;
  s.geometry.pad_h = s.geometry.pad_w = dilation * (k - 1) / 2;
  s.geometry.dilation_h = s.geometry.dilation_w = dilation;
  s.bias = bias;
  return s;
}

Conv2d::Conv2d(const ParamBuilder& b, const ConvSpec& spec) : spec_(spec) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in * spec.kh * spec.kw));
  weight_ = b.add("weight", b.init().uniform({spec.out, spec.in, spec.kh, spec.kw}, bound));
  if (spec.bias) bias_ = b.add("bias", b.init().uniform({1, spec.out, 1, 1}, bound));
}

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight_, bias_, spec_.geometry); }

BatchNorm2d::BatchNorm2d(const ParamBuilder& b, int channels) {
  gamma_ = b.add("weight", b.init().constant({1, channels, 1, 1}, 1.0));
  beta_ = b.add("bias", b.init().constant({1, channels, 1, 1}, 0.0));
  running_mean_ = b.add("running_mean", b.init().constant({1, channels, 1, 1}, 0.0), false);
  running_var_ = b.add("running_var", b.init().constant({1, channels, 1, 1}, 1.0), false);
}

Var BatchNorm2d::operator()(const Var& x, const ForwardOptions& opt) const {
  Var rm = running_mean_;
  Var rv = running_var_;
  return ops::batch_norm(x, gamma_, beta_, rm.mutable_value(), rv.mutable_value(), opt.training,
                         opt.training && opt.update_running_stats, kMomentum, kEps);
}

ConvBn::ConvBn(const ParamBuilder& b, ConvSpec spec, bool relu) : relu_(relu) {
  spec.bias = false;
  conv_ = Conv2d(b.sub("conv"), spec);
  bn_ = BatchNorm2d(b.sub("bn"), spec.out);
}

Var ConvBn::operator()(const Var& x, const ForwardOptions& opt) const {
  Var y = bn_(conv_(x), opt);
  return relu_ ? ops::relu(y) : y;
}

}  // namespace contrinet
