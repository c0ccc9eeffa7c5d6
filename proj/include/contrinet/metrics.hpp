#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contrinet/tensor.hpp"

/// Saliency evaluation on single maps. Predictions S hold values in [0, 1];
/// ground truth G holds 0/1. Both are [1, 1, H, W] tensors.
namespace contrinet::metrics {

inline constexpr double kEps = 2.220446049250313e-16;
inline constexpr int kThresholds = 255;

/// round(255 * S) clamped to [0, 255].
std::vector<std::uint8_t> quantize(const Tensor& s);

double mae(const Tensor& s, const Tensor& g);
/// Mean over thresholds tau = 0..254 of F_beta for the map (q > tau).
double f_measure_mean(const Tensor& s, const Tensor& g, double beta2 = 0.3);
/// Per-threshold F_beta values (index tau).
std::vector<double> f_measure_curve(const Tensor& s, const Tensor& g, double beta2 = 0.3);
double f_measure_weighted(const Tensor& s, const Tensor& g, double beta2 = 1.0);
double s_measure(const Tensor& s, const Tensor& g, double alpha = 0.5);
double e_measure_mean(const Tensor& s, const Tensor& g);
/// Enhanced-alignment score of one binary foreground map against G.
double e_measure_binary(const std::vector<std::uint8_t>& fm, const Tensor& g);

/// Euclidean distance from every pixel to the nearest foreground pixel of g,
/// and that pixel's flat index. Ties go to the smallest (column, row).
void nearest_foreground(const Tensor& g, std::vector<double>& dist, std::vector<std::size_t>& index);

struct ImageMetrics {
  double sm = 0.0;
  double fbeta_mean = 0.0;
  double fbeta_weighted = 0.0;
  double em_mean = 0.0;
  double mae = 0.0;
};

ImageMetrics evaluate_image(const Tensor& s, const Tensor& g);

struct ImageRecord {
  std::string name;
  ImageMetrics metrics;
  std::vector<std::string> attributes;
};

struct MetricReport {
  std::vector<ImageRecord> images;
  ImageMetrics aggregate;
  std::map<std::string, ImageMetrics> by_attribute;
  std::map<std::string, int> attribute_counts;
  std::vector<std::string> errors;

  nlohmann::json to_json() const;
};

/// Aggregates (arithmetic means) and attribute slices from per-image records.
MetricReport summarize(std::vector<ImageRecord> records, std::vector<std::string> errors = {});

/// Parses "filename,attr1;attr2" lines; the filename's stem is the key.
std::map<std::string, std::vector<std::string>> load_attributes(const std::filesystem::path& path);

/// Matches prediction and GT files by stem and evaluates every pair. Files
/// that fail to load or differ in size are recorded as errors and skipped.
MetricReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                           const std::optional<std::filesystem::path>& attributes = std::nullopt);

}  // namespace contrinet::metrics
