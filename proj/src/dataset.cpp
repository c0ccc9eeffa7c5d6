#include "contrinet/dataset.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "contrinet/errors.hpp"
#include "contrinet/image_io.hpp"

namespace contrinet {

DatasetIndex load_dataset(const std::filesystem::path& root) {
  DatasetIndex index;
  index.root = root;
  const char* kDirs[3] = {"RGB", "T", "GT"};
  std::array<std::map<std::string, std::filesystem::path>, 3> files;
  for (int i = 0; i < 3; ++i) {
    const auto dir = root / kDirs[i];
    if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory missing: " + dir.string());
    files[i] = list_images(dir);
  }
  std::set<std::string> stems;
  for (const auto& f : files)
    for (const auto& [stem, _] : f) stems.insert(stem);
  for (const std::string& stem : stems) {
    std::string absent;
    for (int i = 0; i < 3; ++i) {
      if (!files[i].count(stem)) absent += (absent.empty() ? "" : ", ") + std::string(kDirs[i]);
    }
    if (!absent.empty()) {
      index.missing.push_back(stem + ": missing " + absent);
      continue;
    }
    index.triples.push_back({stem, files[0][stem], files[1][stem], files[2][stem]});
  }
  if (index.triples.empty()) throw DataError("no complete RGB/T/GT triples under " + root.string());
  return index;
}

std::vector<Sample> load_samples(const DatasetIndex& index, int size) {
  std::vector<Sample> out;
  out.reserve(index.triples.size());
  for (const auto& t : index.triples) {
    out.push_back({t.stem, read_color(t.rgb, size), read_thermal(t.thermal, size), read_mask(t.gt, size)});
  }
  return out;
}

bool AugmentParams::is_identity() const {
  return !flip && angle_degrees == 0.0 && crop_left == 0.0 && crop_right == 0.0 && crop_top == 0.0 &&
         crop_bottom == 0.0;
}

AugmentParams draw_augment(const TrainingConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentParams p;
  p.flip = unit(rng) < cfg.flip_probability;
  p.angle_degrees = (2.0 * unit(rng) - 1.0) * cfg.max_rotation_degrees;
  p.crop_left = unit(rng) * cfg.max_crop_fraction;
  p.crop_right = unit(rng) * cfg.max_crop_fraction;
  p.crop_top = unit(rng) * cfg.max_crop_fraction;
  p.crop_bottom = unit(rng) * cfg.max_crop_fraction;
  return p;
}

std::vector<std::array<double, 2>> sampling_map(const AugmentParams& p, int h, int w) {
  std::vector<std::array<double, 2>> map(static_cast<std::size_t>(h) * w);
  const double left = p.crop_left * w, right = p.crop_right * w;
  const double top = p.crop_top * h, bottom = p.crop_bottom * h;
  const double sx = (w - left - right) / w, sy = (h - top - bottom) / h;
  const double theta = p.angle_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  for (int yo = 0; yo < h; ++yo) {
    for (int xo = 0; xo < w; ++xo) {
      // Output -> cropped window -> unrotated -> unflipped source.
      const double xc = left + (xo + 0.5) * sx - 0.5;
      const double yc = top + (yo + 0.5) * sy - 0.5;
      const double xr = cx + c * (xc - cx) + s * (yc - cy);
      const double yr = cy - s * (xc - cx) + c * (yc - cy);
      map[static_cast<std::size_t>(yo) * w + xo] = {p.flip ? (w - 1) - xr : xr, yr};
    }
  }
  return map;
}

Tensor warp_bilinear(const Tensor& image, const std::vector<std::array<double, 2>>& map) {
  const int h = image.h(), w = image.w();
  Tensor out(image.shape());
  for (int n = 0; n < image.n(); ++n)
    for (int ch = 0; ch < image.c(); ++ch)
      for (std::size_t o = 0; o < map.size(); ++o) {
        const auto [x, y] = map[o];
        const double fx = std::floor(x), fy = std::floor(y);
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const double ax = x - fx, ay = y - fy;
        double acc = 0.0;
        const int xs[2] = {x0, x0 + 1}, ys[2] = {y0, y0 + 1};
        const double wx[2] = {1.0 - ax, ax}, wy[2] = {1.0 - ay, ay};
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i) {
            if (wx[i] == 0.0 || wy[j] == 0.0) continue;
            if (xs[i] < 0 || xs[i] >= w || ys[j] < 0 || ys[j] >= h) continue;
            acc += wx[i] * wy[j] * image.at(n, ch, ys[j], xs[i]);
          }
        out[out.offset(n, ch, 0, 0) + o] = acc;
      }
  return out;
}

Tensor warp_nearest(const Tensor& image, const std::vector<std::array<double, 2>>& map) {
  const int h = image.h(), w = image.w();
  Tensor out(image.shape());
  for (int n = 0; n < image.n(); ++n)
    for (int ch = 0; ch < image.c(); ++ch)
      for (std::size_t o = 0; o < map.size(); ++o) {
        const int x = static_cast<int>(std::lround(map[o][0]));
        const int y = static_cast<int>(std::lround(map[o][1]));
        if (x < 0 || x >= w || y < 0 || y >= h) continue;
        out[out.offset(n, ch, 0, 0) + o] = image.at(n, ch, y, x);
      }
  return out;
}

Sample augment(const Sample& s, const AugmentParams& p) {
  const auto map = sampling_map(p, s.rgb.h(), s.rgb.w());
  return {s.name, warp_bilinear(s.rgb, map), warp_bilinear(s.thermal, map), warp_nearest(s.gt, map)};
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace contrinet
