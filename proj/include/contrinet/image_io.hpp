#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "contrinet/tensor.hpp"

namespace contrinet {

/// Files with an image extension (.png, .jpg, .jpeg, .bmp), keyed by stem.
/// Throws DataError if two files share a stem.
std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir);

/// [1, 3, H, W] in [0, 1], RGB order. size > 0 resizes bilinearly to size x size.
Tensor read_color(const std::filesystem::path& path, int size = 0);
/// Single-channel image replicated to three channels.
Tensor read_thermal(const std::filesystem::path& path, int size = 0);
/// [1, 1, H, W] gray values in [0, 1].
Tensor read_gray(const std::filesystem::path& path);
/// [1, 1, H, W] binarised at 127; size > 0 resizes with nearest neighbour.
Tensor read_mask(const std::filesystem::path& path, int size = 0);
/// Original (height, width) of an image file.
std::pair<int, int> image_size(const std::filesystem::path& path);

/// A [1, 1, H, W] map in [0, 1] resized bilinearly to out_h x out_w and
/// rounded to 8-bit levels (the values write_map stores, divided by 255).
Tensor output_map(const Tensor& map, int out_h, int out_w);
/// Writes a [1, 1, H, W] map in [0, 1] as 8-bit round(255 * m), resized
/// bilinearly to out_h x out_w when they differ.
void write_map(const std::filesystem::path& path, const Tensor& map, int out_h, int out_w);

}  // namespace contrinet
