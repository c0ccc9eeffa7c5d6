#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "contrinet/config.hpp"
#include "contrinet/tensor.hpp"

namespace contrinet {

/// Matched RGB / thermal / GT files under <root>/{RGB,T,GT}.
struct DatasetIndex {
  struct Triple {
    std::string stem;
    std::filesystem::path rgb, thermal, gt;
  };
  std::filesystem::path root;
  std::vector<Triple> triples;  ///< sorted by stem
  std::vector<std::string> missing;  ///< "stem: missing T, GT"
};

/// Throws DataError if a subdirectory is absent or no stem is complete.
DatasetIndex load_dataset(const std::filesystem::path& root);

/// One preprocessed training pair: rgb/thermal [1, 3, S, S], gt [1, 1, S, S].
struct Sample {
  std::string name;
  Tensor rgb, thermal, gt;
};

std::vector<Sample> load_samples(const DatasetIndex& index, int size);

/// One geometric draw shared by both images and the mask.
struct AugmentParams {
  bool flip = false;
  double angle_degrees = 0.0;
  /// Fractions of the width/height removed at each border before resizing back.
  double crop_left = 0.0, crop_right = 0.0, crop_top = 0.0, crop_bottom = 0.0;

  bool is_identity() const;
};

AugmentParams draw_augment(const TrainingConfig& cfg, std::mt19937_64& rng);

/// Source coordinates (x, y) for every output pixel, row-major.
std::vector<std::array<double, 2>> sampling_map(const AugmentParams& p, int h, int w);

/// Bilinear resampling of every channel through the map; zero outside.
Tensor warp_bilinear(const Tensor& image, const std::vector<std::array<double, 2>>& map);
/// Nearest-neighbour resampling (for masks); zero outside.
Tensor warp_nearest(const Tensor& image, const std::vector<std::array<double, 2>>& map);

Sample augment(const Sample& s, const AugmentParams& p);

/// Deterministic generator for (seed, a, b).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

}  // namespace contrinet
