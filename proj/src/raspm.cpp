#include "contrinet/raspm.hpp"

#include <stdexcept>
#include <string>

namespace contrinet {
namespace {

ConvSpec asymmetric(int in, int out, int kh, int kw) {
  ConvSpec s;
  s.in = in;
  s.out = out;
  s.kh = kh;
  s.kw = kw;
  s.geometry.pad_h = (kh - 1) / 2;
  s.geometry.pad_w = (kw - 1) / 2;
  s.bias = false;
  return s;
}

}  // namespace

Raspm::Raspm(const ParamBuilder& b, int in_channels, int width, bool atrous) {
  if (width % 4 != 0) throw std::invalid_argument("RASPM width must be divisible by 4");
  const int q = width / 4;
  for (int k = 1; k <= 4; ++k) {
    const ParamBuilder bb = b.sub("branch" + std::to_string(k));
    Branch& br = branches_[k - 1];
    const int len = 2 * k - 1;
    br.reduce = ConvBn(bb.sub("reduce"), ConvSpec::square(in_channels, q, 1), true);
    if (k > 1) {
      br.asym_h = ConvBn(bb.sub("asym_h"), asymmetric(q, q, 1, len), true);
      br.asym_v = ConvBn(bb.sub("asym_v"), asymmetric(q, q, len, 1), true);
    }
    br.dilated = ConvBn(bb.sub("dilated"), ConvSpec::square(q, q, 3, atrous ? len : 1), true);
  }
  merge_ = ConvBn(b.sub("merge"), ConvSpec::square(width, width, 3), false);
  residual_ = ConvBn(b.sub("residual"), ConvSpec::square(in_channels, width, 1), false);
}

std::array<Var, 4> Raspm::branches(const Var& phi, const ForwardOptions& opt) const {
  std::array<Var, 4> f;
  f[0] = branches_[0].reduce(phi, opt);
  for (int k = 1; k < 4; ++k) {
    const Branch& br = branches_[k];
    f[k] = br.asym_v(br.asym_h(ops::add(br.reduce(phi, opt), f[k - 1]), opt), opt);
  }
  return f;
}

Var Raspm::forward(const Var& phi, const ForwardOptions& opt) const {
  const std::array<Var, 4> f = branches(phi, opt);
  std::vector<Var> dilated;
  for (int k = 0; k < 4; ++k) dilated.push_back(branches_[k].dilated(f[k], opt));
  return ops::add(merge_(ops::concat_channels(dilated), opt), residual_(phi, opt));
}

PlainBlock::PlainBlock(const ParamBuilder& b, int in_channels, int width)
    : conv1_(b.sub("conv1"), ConvSpec::square(in_channels, width, 3), true),
      conv2_(b.sub("conv2"), ConvSpec::square(width, width, 3), false),
      residual_(b.sub("residual"), ConvSpec::square(in_channels, width, 1), false) {}

Var PlainBlock::forward(const Var& phi, const ForwardOptions& opt) const {
  return ops::add(conv2_(conv1_(phi, opt), opt), residual_(phi, opt));
}

PpmBlock::PpmBlock(const ParamBuilder& b, int in_channels, int width) {
  proj_ = ConvBn(b.sub("proj"), ConvSpec::square(in_channels, width, 1), true);
  for (std::size_t i = 0; i < kBins.size(); ++i) {
    bins_[i] = ConvBn(b.sub("bin" + std::to_string(kBins[i])), ConvSpec::square(in_channels, width / 4, 1), true);
  }
  merge_ = ConvBn(b.sub("merge"), ConvSpec::square(2 * width, width, 3), true);
}

Var PpmBlock::forward(const Var& phi, const ForwardOptions& opt) const {
  const int h = phi.shape()[2], w = phi.shape()[3];
  std::vector<Var> parts{proj_(phi, opt)};
  for (std::size_t i = 0; i < kBins.size(); ++i) {
    const Var pooled = ops::adaptive_avg_pool(phi, kBins[i], kBins[i]);
    parts.push_back(ops::resize_bilinear(bins_[i](pooled, opt), h, w));
  }
  return merge_(ops::concat_channels(parts), opt);
}

AsppBlock::AsppBlock(const ParamBuilder& b, int in_channels, int width) {
  constexpr int kDilations[3] = {6, 12, 18};
  branches_[0] = ConvBn(b.sub("branch1"), ConvSpec::square(in_channels, width, 1), true);
  for (int i = 0; i < 3; ++i) {
    branches_[i + 1] = ConvBn(b.sub("branch" + std::to_string(i + 2)),
                              ConvSpec::square(in_channels, width, 3, kDilations[i]), true);
  }
  image_pool_ = ConvBn(b.sub("image_pool"), ConvSpec::square(in_channels, width, 1), true);
  merge_ = ConvBn(b.sub("merge"), ConvSpec::square(5 * width, width, 1), true);
}

Var AsppBlock::forward(const Var& phi, const ForwardOptions& opt) const {
  const int h = phi.shape()[2], w = phi.shape()[3];
  std::vector<Var> parts;
  for (const ConvBn& br : branches_) parts.push_back(br(phi, opt));
  parts.push_back(ops::resize_bilinear(image_pool_(ops::global_avg_pool(phi), opt), h, w));
  return merge_(ops::concat_channels(parts), opt);
}

std::unique_ptr<DecoderBlockBase> make_decoder_block(const ParamBuilder& b, int in_channels, int width,
                                                     const AblationConfig& ablation) {
  switch (ablation.decoder_block) {
    case DecoderBlock::kPlain:
      return std::make_unique<PlainBlock>(b, in_channels, width);
    case DecoderBlock::kPpm:
      return std::make_unique<PpmBlock>(b, in_channels, width);
    case DecoderBlock::kAspp:
      return std::make_unique<AsppBlock>(b, in_channels, width);
    case DecoderBlock::kRaspm:
      break;
  }
  return std::make_unique<Raspm>(b, in_channels, width, ablation.use_raspm_atrous);
}

DecoderFlow::DecoderFlow(const ParamBuilder& b, const std::array<int, 5>& encoder_channels, int width,
                         const AblationConfig& ablation) {
  for (int i = 1; i <= 5; ++i) {
    const int in = i == 5 ? encoder_channels[4] : width + encoder_channels[i - 1];
    blocks_.push_back(make_decoder_block(b.sub("level" + std::to_string(i)), in, width, ablation));
  }
}

Var upsample_concat(const Var& upper, const Var& e) {
  const Var up = ops::resize_bilinear(upper, e.shape()[2], e.shape()[3]);
  return ops::concat_channels({up, e});
}

Var DecoderFlow::level(int i, const Var& e_i, const Var& upper, const ForwardOptions& opt) const {
  const Var phi = upper.defined() ? upsample_concat(upper, e_i) : e_i;
  return block(i).forward(phi, opt);
}

std::array<Var, 5> DecoderFlow::decode(const Pyramid& e, const ForwardOptions& opt) const {
  std::array<Var, 5> d;
  d[4] = level(5, e[4], Var(), opt);
  for (int i = 4; i >= 1; --i) d[i - 1] = level(i, e[i - 1], d[i], opt);
  return d;
}

}  // namespace contrinet
