#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "contrinet/config.hpp"
#include "contrinet/dataset.hpp"

namespace synthetic {

/// Elliptic objects on a flat background, bright in both modalities. `noise`
/// scales the per-pixel jitter.
std::vector<contrinet::Sample> ellipses(int count, int size, std::uint64_t seed, double noise = 0.3);

/// Writes samples as <root>/{RGB,T,GT}/<name>.png.
void write_dataset(const std::filesystem::path& root, const std::vector<contrinet::Sample>& samples);

/// Toy backbone at the given input size and decoder width.
contrinet::ModelConfig toy_config(int input_size = 32, int width = 8);

/// Fresh directory under the system temp path.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace synthetic
