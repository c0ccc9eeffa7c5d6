#pragma once

#include <array>
#include <memory>
#include <vector>

#include "contrinet/config.hpp"
#include "contrinet/encoder.hpp"
#include "contrinet/layers.hpp"

namespace contrinet {

/// Decoder block contract: [N, in, H, W] -> [N, width, H, W].
class DecoderBlockBase {
 public:
  virtual ~DecoderBlockBase() = default;
  virtual Var forward(const Var& phi, const ForwardOptions& opt) const = 0;
};

/// Residual atrous spatial pyramid module.
class Raspm : public DecoderBlockBase {
 public:
  Raspm(const ParamBuilder& b, int in_channels, int width, bool atrous);
  Var forward(const Var& phi, const ForwardOptions& opt) const override;
  /// Intermediate branch features F_1..F_4 (before the dilated convs).
  std::array<Var, 4> branches(const Var& phi, const ForwardOptions& opt) const;

 private:
  struct Branch {
    ConvBn reduce, asym_h, asym_v, dilated;
  };
  std::array<Branch, 4> branches_;
  ConvBn merge_, residual_;
};

/// Two stacked 3x3 convs with a 1x1 shortcut.
class PlainBlock : public DecoderBlockBase {
 public:
  PlainBlock(const ParamBuilder& b, int in_channels, int width);
  Var forward(const Var& phi, const ForwardOptions& opt) const override;

 private:
  ConvBn conv1_, conv2_, residual_;
};

/// Pyramid pooling over bins {1, 2, 3, 6}.
class PpmBlock : public DecoderBlockBase {
 public:
  PpmBlock(const ParamBuilder& b, int in_channels, int width);
  Var forward(const Var& phi, const ForwardOptions& opt) const override;

 private:
  static constexpr std::array<int, 4> kBins{1, 2, 3, 6};
  ConvBn proj_;
  std::array<ConvBn, 4> bins_;
  ConvBn merge_;
};

/// Standard atrous pyramid: 1x1, 3x3 at dilations 6/12/18, image pooling.
class AsppBlock : public DecoderBlockBase {
 public:
  AsppBlock(const ParamBuilder& b, int in_channels, int width);
  Var forward(const Var& phi, const ForwardOptions& opt) const override;

 private:
  std::array<ConvBn, 4> branches_;
  ConvBn image_pool_;
  ConvBn merge_;
};

std::unique_ptr<DecoderBlockBase> make_decoder_block(const ParamBuilder& b, int in_channels, int width,
                                                     const AblationConfig& ablation);

/// Top-down stack of five decoder blocks: level 5 sees E_5, level i sees
/// [UP(D_{i+1}) ; E_i].
class DecoderFlow {
 public:
  DecoderFlow(const ParamBuilder& b, const std::array<int, 5>& encoder_channels, int width,
              const AblationConfig& ablation);

  /// One level (1-based). `upper` is D_{i+1}; undefined for level 5.
  Var level(int i, const Var& e_i, const Var& upper, const ForwardOptions& opt) const;
  std::array<Var, 5> decode(const Pyramid& e, const ForwardOptions& opt) const;
  const DecoderBlockBase& block(int i) const { return *blocks_.at(i - 1); }

 private:
  std::vector<std::unique_ptr<DecoderBlockBase>> blocks_;
};

/// [UP(upper) resized to e's size ; e].
Var upsample_concat(const Var& upper, const Var& e);

}  // namespace contrinet
