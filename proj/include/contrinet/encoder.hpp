#pragma once

#include <array>
#include <memory>

#include "contrinet/config.hpp"
#include "contrinet/layers.hpp"

namespace contrinet {

/// Five feature levels at strides 2, 4, 8, 16, 32 (index 0 is level 1).
using Pyramid = std::array<Var, 5>;

class Encoder {
 public:
  virtual ~Encoder() = default;
  /// Raw stage stack. Accepts any spatial size; level i+1 is ceil(level i / 2).
  virtual Pyramid forward(const Var& image, const ForwardOptions& opt) const = 0;
};

/// Per stage: strided ConvBnReLU followed by a two-conv residual unit.
class ToyEncoder : public Encoder {
 public:
  ToyEncoder(const ParamBuilder& b, const std::array<int, 5>& channels);
  Pyramid forward(const Var& image, const ForwardOptions& opt) const override;

 private:
  struct Stage {
    ConvBn down, res1, res2;
  };
  std::array<Stage, 5> stages_;
};

/// Res2Net-50 (v1b, 26w x 4s) layout: deep stem, then bottle2neck layers
/// [3, 4, 6, 3]. Used for complexity reporting at full scale.
class Res2NetEncoder : public Encoder {
 public:
  explicit Res2NetEncoder(const ParamBuilder& b);
  Pyramid forward(const Var& image, const ForwardOptions& opt) const override;

 private:
  struct Block {
    int width = 0;
    int stride = 1;
    bool first = false;
    ConvBn reduce;
    std::array<ConvBn, 3> splits;
    ConvBn expand;
    bool has_down = false;
    ConvBn down;
  };
  Var block_forward(const Block& blk, const Var& x, const ForwardOptions& opt) const;

  std::array<ConvBn, 3> stem_;
  std::array<std::vector<Block>, 4> layers_;
};

std::unique_ptr<Encoder> make_encoder(const ParamBuilder& b, const ModelConfig& cfg);

/// Shared-weight extraction for both modalities. Inputs must be [N, 3, H, W]
/// with H and W divisible by 32 and equal shapes.
std::pair<Pyramid, Pyramid> extract_pyramids(const Encoder& rgb_encoder, const Encoder& thermal_encoder,
                                             const Var& rgb, const Var& thermal, const ForwardOptions& opt);

}  // namespace contrinet
