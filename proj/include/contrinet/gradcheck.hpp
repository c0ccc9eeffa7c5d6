#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace contrinet {

struct GradcheckEntry {
  std::string name;
  int checked = 0;  ///< coordinates compared
  int refined = 0;  ///< extra probes at step / 10 and step / 100
  double max_abs_error = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::string module;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::vector<GradcheckEntry> entries;

  nlohmann::json to_json() const;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-6;
  /// Coordinates probed per tensor: 0 checks all of them, negative uses the
  /// module default (all, except a random subset for "full").
  int max_coords = -1;
};

/// Module names accepted by gradcheck.
const std::vector<std::string>& gradcheck_modules();

/// Central finite differences against the analytic gradient of a random
/// projection of the module output, w.r.t. inputs and trainable parameters.
/// Per tensor, rel_error = max|a - n| / max(max|a|, max|n|, 1e-3). A
/// coordinate that disagrees at `step` is re-probed at step / 10, then step / 100.
/// Throws ConfigError for an unknown module.
GradcheckReport gradcheck(const std::string& module, const GradcheckOptions& opts = {});

}  // namespace contrinet
