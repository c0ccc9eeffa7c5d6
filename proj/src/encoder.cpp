#include "contrinet/encoder.hpp"

#include <stdexcept>
#include <string>

namespace contrinet {
namespace {

ConvSpec strided(int in, int out, int k, int stride) {
  ConvSpec s = ConvSpec::square(in, out, k, 1, false);
  s.geometry.stride_h = s.geometry.stride_w = stride;
  return s;
}

std::string stage_name(int i) { return "stage" + std::to_string(i); }

}  // namespace

ToyEncoder::ToyEncoder(const ParamBuilder& b, const std::array<int, 5>& channels) {
  int in = 3;
  for (int i = 0; i < 5; ++i) {
    const ParamBuilder sb = b.sub(stage_name(i + 1));
    const int out = channels[i];
    stages_[i].down = ConvBn(sb.sub("down"), strided(in, out, 3, 2), true);
    stages_[i].res1 = ConvBn(sb.sub("res1"), ConvSpec::square(out, out, 3), true);
    stages_[i].res2 = ConvBn(sb.sub("res2"), ConvSpec::square(out, out, 3), false);
    in = out;
  }
}

Pyramid ToyEncoder::forward(const Var& image, const ForwardOptions& opt) const {
  Pyramid out;
  Var x = image;
  for (int i = 0; i < 5; ++i) {
    const Stage& s = stages_[i];
    Var d = s.down(x, opt);
    x = ops::relu(ops::add(d, s.res2(s.res1(d, opt), opt)));
    out[i] = x;
  }
  return out;
}

Res2NetEncoder::Res2NetEncoder(const ParamBuilder& b) {
  const ParamBuilder stem = b.sub("stage1");
  stem_[0] = ConvBn(stem.sub("conv1"), strided(3, 32, 3, 2), true);
  stem_[1] = ConvBn(stem.sub("conv2"), strided(32, 32, 3, 1), true);
  stem_[2] = ConvBn(stem.sub("conv3"), strided(32, 64, 3, 1), true);

  constexpr int kDepth[4] = {3, 4, 6, 3};
  constexpr int kPlanes[4] = {64, 128, 256, 512};
  constexpr int kBaseWidth = 26;
  constexpr int kScale = 4;
  int inplanes = 64;
  for (int l = 0; l < 4; ++l) {
    const ParamBuilder lb = b.sub(stage_name(l + 2));
    const int planes = kPlanes[l];
    const int width = planes * kBaseWidth / 64;
    for (int j = 0; j < kDepth[l]; ++j) {
      const ParamBuilder bb = lb.sub("block" + std::to_string(j + 1));
      Block blk;
      blk.width = width;
      blk.first = j == 0;
      blk.stride = (j == 0 && l > 0) ? 2 : 1;
      blk.reduce = ConvBn(bb.sub("conv1"), ConvSpec::square(inplanes, width * kScale, 1, 1, false), true);
      for (int k = 0; k < kScale - 1; ++k) {
        blk.splits[k] =
            ConvBn(bb.sub("convs" + std::to_string(k + 1)), strided(width, width, 3, blk.stride), true);
      }
      blk.expand = ConvBn(bb.sub("conv3"), ConvSpec::square(width * kScale, planes * 4, 1, 1, false), false);
      if (j == 0) {
        blk.has_down = true;
        blk.down = ConvBn(bb.sub("downsample"), ConvSpec::square(inplanes, planes * 4, 1, 1, false), false);
      }
      layers_[l].push_back(std::move(blk));
      inplanes = planes * 4;
    }
  }
}

Var Res2NetEncoder::block_forward(const Block& blk, const Var& x, const ForwardOptions& opt) const {
  const Var reduced = blk.reduce(x, opt);
  std::vector<Var> parts;
  Var sp;
  for (int k = 0; k < 3; ++k) {
    const Var piece = ops::narrow_channels(reduced, k * blk.width, blk.width);
    sp = (k == 0 || blk.first) ? piece : ops::add(sp, piece);
    sp = blk.splits[k](sp, opt);
    parts.push_back(sp);
  }
  const Var last = ops::narrow_channels(reduced, 3 * blk.width, blk.width);
  parts.push_back(blk.first ? ops::avg_pool2d(last, 3, blk.stride, 1, true) : last);
  Var out = blk.expand(ops::concat_channels(parts), opt);
  Var residual = x;
  if (blk.has_down) {
    Var pooled = blk.stride > 1 ? ops::avg_pool2d(x, blk.stride, blk.stride, 0, false) : x;
    residual = blk.down(pooled, opt);
  }
  return ops::relu(ops::add(out, residual));
}

Pyramid Res2NetEncoder::forward(const Var& image, const ForwardOptions& opt) const {
  Pyramid out;
  Var x = image;
  for (const ConvBn& c : stem_) x = c(x, opt);
  out[0] = x;
  x = ops::max_pool2d(x, 3, 2, 1);
  for (int l = 0; l < 4; ++l) {
    for (const Block& blk : layers_[l]) x = block_forward(blk, x, opt);
    out[l + 1] = x;
  }
  return out;
}

std::unique_ptr<Encoder> make_encoder(const ParamBuilder& b, const ModelConfig& cfg) {
  if (cfg.backbone == Backbone::kRes2Net50) return std::make_unique<Res2NetEncoder>(b);
  return std::make_unique<ToyEncoder>(b, cfg.encoder_channels);
}

std::pair<Pyramid, Pyramid> extract_pyramids(const Encoder& rgb_encoder, const Encoder& thermal_encoder,
                                             const Var& rgb, const Var& thermal, const ForwardOptions& opt) {
  const Shape& s = rgb.shape();
  require_same_shape(s, thermal.shape(), "extract_pyramids");
  if (s[1] != 3) throw std::invalid_argument("extract_pyramids: expected 3-channel inputs, got " + to_string(s));
  if (s[2] % 32 != 0 || s[3] % 32 != 0) {
    throw std::invalid_argument("extract_pyramids: spatial size " + std::to_string(s[2]) + "x" +
                                std::to_string(s[3]) + " is not divisible by 32");
  }
  return {rgb_encoder.forward(rgb, opt), thermal_encoder.forward(thermal, opt)};
}

}  // namespace contrinet
