#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contrinet/config.hpp"
#include "contrinet/metrics.hpp"
#include "contrinet/model.hpp"

namespace contrinet {

/// A named partial config applied on top of the base config.
struct AblationVariant {
  std::string name;
  nlohmann::json delta = nlohmann::json::object();
};

/// Accepts [{"name": ..., "delta": {...}}, ...], {"variants": [...]} or an
/// object mapping names to deltas. Empty lists and duplicate names are errors.
std::vector<AblationVariant> parse_variants(const nlohmann::json& doc);
std::vector<AblationVariant> load_variants(const std::filesystem::path& path);

/// One variant per component and framework toggle, plus the full model.
std::vector<AblationVariant> standard_variants();

/// Applies every delta to `base`; throws ConfigError naming the variant.
std::vector<ModelConfig> resolve_variants(const ModelConfig& base, const std::vector<AblationVariant>& variants);

struct AblationRow {
  std::string name;
  nlohmann::json delta;
  std::vector<std::string> changed;  ///< config fields differing from the base
  Complexity complexity;
  double final_loss = 0.0;
  metrics::ImageMetrics metrics;
  int images = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  nlohmann::json to_json() const;
};

struct AblationOptions {
  std::filesystem::path out_dir = "ablation";
  /// Evaluation data; the training root when unset.
  std::optional<std::filesystem::path> eval_root;
  bool deterministic = true;
};

/// Trains every variant on data_root (checkpoints under out_dir/<name>),
/// evaluates M_f and tabulates complexity and metrics per variant.
AblationReport run_ablation(const ModelConfig& base, const std::vector<AblationVariant>& variants,
                            const std::filesystem::path& data_root, const AblationOptions& opts = {});

}  // namespace contrinet
