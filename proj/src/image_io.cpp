#include "contrinet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "contrinet/errors.hpp"

namespace contrinet {
namespace {

bool is_image(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

cv::Mat load(const std::filesystem::path& path, int flags) {
  cv::Mat img = cv::imread(path.string(), flags);
  if (img.empty()) throw DataError("cannot read image " + path.string());
  return img;
}

cv::Mat resized(const cv::Mat& img, int size, int interpolation) {
  if (size <= 0 || (img.rows == size && img.cols == size)) return img;
  cv::Mat out;
  cv::resize(img, out, cv::Size(size, size), 0, 0, interpolation);
  return out;
}

Tensor from_mat(const cv::Mat& img, int channels) {
  cv::Mat f;
  img.convertTo(f, CV_64F, 1.0 / 255.0);
  const int h = f.rows, w = f.cols;
  Tensor t({1, channels, h, w});
  for (int y = 0; y < h; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const int src = f.channels() == 1 ? 0 : f.channels() - 1 - c;  // BGR -> RGB
        t.at(0, c, y, x) = row[x * f.channels() + src];
      }
    }
  }
  return t;
}

}  // namespace

std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw DataError("duplicate image stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

Tensor read_color(const std::filesystem::path& path, int size) {
  return from_mat(resized(load(path, cv::IMREAD_COLOR), size, cv::INTER_LINEAR), 3);
}

Tensor read_thermal(const std::filesystem::path& path, int size) {
  return from_mat(resized(load(path, cv::IMREAD_GRAYSCALE), size, cv::INTER_LINEAR), 3);
}

Tensor read_gray(const std::filesystem::path& path) { return from_mat(load(path, cv::IMREAD_GRAYSCALE), 1); }

Tensor read_mask(const std::filesystem::path& path, int size) {
  cv::Mat img = load(path, cv::IMREAD_GRAYSCALE);
  cv::Mat bin;
  cv::threshold(img, bin, 127, 255, cv::THRESH_BINARY);
  Tensor t = from_mat(resized(bin, size, cv::INTER_NEAREST), 1);
  for (double& v : t.values()) v = v > 0.5 ? 1.0 : 0.0;
  return t;
}

std::pair<int, int> image_size(const std::filesystem::path& path) {
  const cv::Mat img = load(path, cv::IMREAD_UNCHANGED);
  return {img.rows, img.cols};
}

Tensor output_map(const Tensor& map, int out_h, int out_w) {
  if (map.n() != 1 || map.c() != 1) throw std::invalid_argument("output_map: expected a [1, 1, H, W] map");
  cv::Mat m(map.h(), map.w(), CV_64F);
  for (int y = 0; y < map.h(); ++y)
    for (int x = 0; x < map.w(); ++x) m.at<double>(y, x) = map.at(0, 0, y, x);
  if (out_h != map.h() || out_w != map.w()) {
    cv::Mat r;
    cv::resize(m, r, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
    m = r;
  }
  Tensor out({1, 1, out_h, out_w});
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      out.at(0, 0, y, x) = static_cast<double>(std::lround(std::clamp(m.at<double>(y, x), 0.0, 1.0) * 255.0)) / 255.0;
    }
  return out;
}

void write_map(const std::filesystem::path& path, const Tensor& map, int out_h, int out_w) {
  const Tensor q = output_map(map, out_h, out_w);
  cv::Mat out(out_h, out_w, CV_8U);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) out.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(q.at(0, 0, y, x) * 255.0));
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write image " + path.string());
}

}  // namespace contrinet
