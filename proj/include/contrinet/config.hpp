#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace contrinet {

/// Invalid configuration or command usage (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Backbone { kToy, kRes2Net50 };
enum class Flow { kRgb, kThermal, kComplementary };
enum class MdamMode { kDynamic, kFixedWeights, kNoDoe, kNone };
enum class DecoderBlock { kRaspm, kPlain, kPpm, kAspp };
enum class LossMode { kHybrid, kWbceOnly, kWiouOnly };
enum class FusionMode { kLogits, kProbabilities };
enum class Schedule { kCosine, kConstant };

inline constexpr std::array<int, 5> kResidualProfile{64, 256, 512, 1024, 2048};
inline constexpr std::array<int, 5> kToyProfile{8, 16, 32, 64, 128};
/// Default se_reduction for the toy backbone (16 does not divide its 8-channel level).
inline constexpr int kToySeReduction = 4;

/// Runtime switches reproducing the component and framework ablations.
struct AblationConfig {
  bool use_mfm_cfe = true;
  bool use_mfm_aff = true;
  bool use_raspm_atrous = true;
  MdamMode mdam_mode = MdamMode::kDynamic;
  /// Kept in canonical order rgb, thermal, complementary.
  std::vector<Flow> active_flows{Flow::kRgb, Flow::kThermal, Flow::kComplementary};
  DecoderBlock decoder_block = DecoderBlock::kRaspm;
  bool shared_encoder = true;
  LossMode loss = LossMode::kHybrid;
  FusionMode fusion = FusionMode::kLogits;

  bool has_flow(Flow f) const;
  bool operator==(const AblationConfig&) const = default;
};

struct TrainingConfig {
  double lr = 5e-5;
  int batch_size = 16;
  int epochs = 100;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::kCosine;
  bool augment = true;
  double flip_probability = 0.5;
  double max_rotation_degrees = 10.0;
  double max_crop_fraction = 0.1;
  /// Extra checkpoint every N optimizer steps; 0 keeps only the final one.
  int checkpoint_every = 0;

  bool operator==(const TrainingConfig&) const = default;
};

struct ModelConfig {
  int input_size = 352;
  Backbone backbone = Backbone::kRes2Net50;
  std::array<int, 5> encoder_channels = kResidualProfile;
  int decoder_width = 64;
  int se_reduction = 16;
  AblationConfig ablation;
  TrainingConfig training;

  bool operator==(const ModelConfig&) const = default;
};

/// Parses a raw JSON document, fills defaults and validates. Unknown keys are
/// rejected. Throws ConfigError with a message naming the offending field.
ModelConfig validate_config(const nlohmann::json& raw);
/// Re-validates an in-memory config (idempotent on valid input).
ModelConfig validate_config(const ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig load_config(const std::filesystem::path& path);

/// Applies an ablation delta (a partial config document) onto `base`.
ModelConfig apply_delta(const ModelConfig& base, const nlohmann::json& delta);

/// Dotted names of the fields in which `a` and `b` differ.
std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b);

std::string to_string(Flow flow);
std::string to_string(MdamMode mode);
std::string to_string(DecoderBlock block);

}  // namespace contrinet
