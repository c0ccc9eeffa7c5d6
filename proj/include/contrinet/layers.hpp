#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "contrinet/ops.hpp"
#include "contrinet/param_store.hpp"

namespace contrinet {

struct ForwardOptions {
  bool training = false;
  /// Fold batch statistics into the running estimates (training only).
  bool update_running_stats = false;
};

/// Deterministic parameter initialiser. In meta mode only shapes are produced.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed, bool meta = false) : rng_(seed), meta_(meta) {}

  Tensor uniform(const Shape& shape, double bound);
  Tensor constant(const Shape& shape, double value);
  bool meta() const { return meta_; }

 private:
  std::mt19937_64 rng_;
  bool meta_;
};

/// Registers parameters under a path prefix.
class ParamBuilder {
 public:
  ParamBuilder(ParamStore& store, Initializer& init, std::string prefix = "")
      : store_(&store), init_(&init), prefix_(std::move(prefix)) {}

  ParamBuilder sub(const std::string& name) const;
  std::string path(const std::string& name) const;
  Var add(const std::string& name, Tensor value, bool trainable = true) const;
  Initializer& init() const { return *init_; }

 private:
  ParamStore* store_;
  Initializer* init_;
  std::string prefix_;
};

struct ConvSpec {
  int in = 0;
  int out = 0;
  int kh = 1;
  int kw = 1;
  ops::Conv2dGeometry geometry{};
  bool bias = true;

  /// Square kernel with "same" padding (for stride 1) and optional dilation.
  static ConvSpec square(int in, int out, int k, int dilation = 1, bool bias = true);
};

/// 2-D convolution with default uniform(±1/sqrt(fan_in)) initialisation.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const ParamBuilder& b, const ConvSpec& spec);

  Var operator()(const Var& x) const;
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  const ConvSpec& spec() const { return spec_; }

 private:
  ConvSpec spec_;
  Var weight_;
  Var bias_;
};

class BatchNorm2d {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(const ParamBuilder& b, int channels);

  Var operator()(const Var& x, const ForwardOptions& opt) const;

 private:
  Var gamma_;
  Var beta_;
  Var running_mean_;
  Var running_var_;
};

/// Bias-free convolution followed by batch norm and optional ReLU.
class ConvBn {
 public:
  ConvBn() = default;
  ConvBn(const ParamBuilder& b, ConvSpec spec, bool relu);

  Var operator()(const Var& x, const ForwardOptions& opt) const;

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  bool relu_ = true;
};

}  // namespace contrinet
