#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>

#include "contrinet/config.hpp"
#include "contrinet/encoder.hpp"
#include "contrinet/heads.hpp"
#include "contrinet/mdam.hpp"
#include "contrinet/mfm.hpp"
#include "contrinet/raspm.hpp"

namespace contrinet {

/// Intermediate tensors of one forward pass.
struct ForwardTrace {
  Pyramid e_r, e_t, e_s;
  std::array<Var, 5> d_r, d_t, d_s;
};

/// Union encoder, MFM, the three decoder flows and their heads. Parameters are
/// initialised from cfg.training.seed.
class ContriNet {
 public:
  explicit ContriNet(const ModelConfig& cfg, bool meta = false);

  SaliencyBundle forward(const Var& rgb, const Var& thermal, const ForwardOptions& opt,
                         ForwardTrace* trace = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }

  const Encoder& rgb_encoder() const { return *rgb_encoder_; }
  const Encoder& thermal_encoder() const { return *thermal_encoder_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParamStore> params_;
  std::shared_ptr<Encoder> rgb_encoder_, thermal_encoder_;
  std::optional<Mfm> mfm_;
  std::unique_ptr<DecoderFlow> flow_r_, flow_t_;
  std::unique_ptr<ComplementaryFlow> flow_s_;
  std::unique_ptr<Heads> heads_;
};

struct Complexity {
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

/// Trainable scalars in `store` and convolution MACs of one call to `forward`.
Complexity measure_complexity(const ParamStore& store, const std::function<void()>& forward);
/// Complexity of the configured model for one image at cfg.input_size,
/// computed on shape-only tensors.
Complexity count_complexity(const ModelConfig& cfg);

}  // namespace contrinet
