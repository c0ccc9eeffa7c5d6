#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contrinet/config.hpp"
#include "contrinet/dataset.hpp"
#include "contrinet/model.hpp"
#include "contrinet/param_store.hpp"

namespace contrinet {

/// Adam with bias correction; weight decay 0.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(const ParamStore& params);

  void step(ParamStore& params, double lr);
  std::int64_t steps() const { return t_; }

  /// Moments stored as "m.<path>" / "v.<path>".
  const ParamStore& state() const { return state_; }
  void load_state(const ParamStore& state, std::int64_t steps);

 private:
  ParamStore state_;
  std::int64_t t_ = 0;
};

/// Learning rate for the update with 0-based index `step` out of `total`.
double learning_rate(const TrainingConfig& cfg, std::int64_t step, std::int64_t total);

struct TrainState {
  std::int64_t step = 0;  ///< completed optimizer steps
  std::int64_t total_steps = 0;
  std::int64_t steps_per_epoch = 0;
  std::uint64_t seed = 0;
  double last_loss = 0.0;

  nlohmann::json to_json() const;
  static TrainState from_json(const nlohmann::json& j);
};

struct Checkpoint {
  ModelConfig config;
  TrainState state;
  ParamStore params;
  ParamStore optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const TrainState& state,
                     const ParamStore& params, const ParamStore& optimizer);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model built from the checkpoint's embedded config with its parameters.
/// If `expected` is given and differs, throws ConfigError naming the fields.
ContriNet load_model(const std::filesystem::path& ckpt, const std::optional<ModelConfig>& expected = std::nullopt);
/// Copies parameters into `model`, naming the first missing or mismatched key.
void assign_params(ContriNet& model, const ParamStore& params);

struct TrainOptions {
  /// Serialises library threading (the optimisation itself is single-threaded).
  bool deterministic = false;
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many completed steps (checkpoint written there).
  std::optional<std::int64_t> stop_at_step;
  /// Called after every step with the log record.
  std::function<void(const nlohmann::json&)> on_step;
};

struct TrainResult {
  std::int64_t steps = 0;
  double final_loss = 0.0;
  std::filesystem::path checkpoint;
};

/// Optimises on preloaded samples; writes train_log.jsonl and checkpoints to out_dir.
TrainResult train_samples(const ModelConfig& cfg, const std::vector<Sample>& samples,
                          const std::filesystem::path& out_dir, const TrainOptions& opts = {});
/// Loads <root>/{RGB,T,GT} (failing on any incomplete triple) and trains.
TrainResult train(const ModelConfig& cfg, const std::filesystem::path& data_root, const std::filesystem::path& out_dir,
                  const TrainOptions& opts = {});

/// Batched [B, C, S, S] stacks of the given samples.
void stack_batch(const std::vector<const Sample*>& batch, Tensor& rgb, Tensor& thermal, Tensor& gt);

/// Inference-mode M_f for every sample.
std::vector<Tensor> predict_samples(const ContriNet& model, const std::vector<Sample>& samples);

}  // namespace contrinet
