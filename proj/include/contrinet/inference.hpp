#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "contrinet/config.hpp"
#include "contrinet/dataset.hpp"
#include "contrinet/metrics.hpp"
#include "contrinet/model.hpp"

namespace contrinet {

struct PredictOptions {
  /// Also write the per-flow maps (<stem>_r, _t, _s next to <stem>_f).
  bool flows = false;
  /// Reject checkpoints whose config differs from this one.
  std::optional<ModelConfig> expected;
};

/// Inference at the model's input size; the maps are returned at the RGB
/// image's original resolution, rounded to 8-bit levels. Entries: M_r, M_t,
/// M_s (undefined tensors for inactive flows) and M_f.
std::array<Tensor, 4> predict_maps(const ContriNet& model, const std::filesystem::path& rgb,
                                   const std::filesystem::path& thermal);

/// Writes <stem>.png (M_f), or with flows <stem>_r/_t/_s/_f.png for the
/// active flows. Returns the written files.
std::vector<std::filesystem::path> predict_pair(const ContriNet& model, const std::filesystem::path& rgb,
                                                const std::filesystem::path& thermal,
                                                const std::filesystem::path& out_dir, bool flows);

/// rgb and thermal are either two files or two directories matched by stem.
std::vector<std::filesystem::path> predict(const std::filesystem::path& ckpt, const std::filesystem::path& rgb,
                                           const std::filesystem::path& thermal, const std::filesystem::path& out_dir,
                                           const PredictOptions& opts = {});

/// Metrics of M_f against every GT of the index at the GT's own resolution.
metrics::MetricReport evaluate_model(const ContriNet& model, const DatasetIndex& index);

}  // namespace contrinet
