#include "contrinet/inference.hpp"

#include <map>

#include "contrinet/errors.hpp"
#include "contrinet/image_io.hpp"
#include "contrinet/training.hpp"

namespace contrinet {
namespace {

constexpr std::array<const char*, 3> kFlowSuffix{"_r", "_t", "_s"};

}  // namespace

std::array<Tensor, 4> predict_maps(const ContriNet& model, const std::filesystem::path& rgb,
                                   const std::filesystem::path& thermal) {
  const int size = model.config().input_size;
  const auto [h, w] = image_size(rgb);
  const Tensor x_r = read_color(rgb, size);
  const Tensor x_t = read_thermal(thermal, size);
  NoGradGuard no_grad;
  const SaliencyBundle b = model.forward(Var::constant(x_r), Var::constant(x_t), ForwardOptions{});
  std::array<Tensor, 4> out;
  for (Flow f : model.config().ablation.active_flows) {
    out[static_cast<int>(f)] = output_map(b.map_of(f).value(), h, w);
  }
  out[3] = output_map(b.m_f.value(), h, w);
  return out;
}

std::vector<std::filesystem::path> predict_pair(const ContriNet& model, const std::filesystem::path& rgb,
                                                const std::filesystem::path& thermal,
                                                const std::filesystem::path& out_dir, bool flows) {
  const std::array<Tensor, 4> maps = predict_maps(model, rgb, thermal);
  const std::string stem = rgb.stem().string();
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const Tensor& map) {
    const std::filesystem::path path = out_dir / (name + ".png");
    write_map(path, map, map.h(), map.w());
    written.push_back(path);
  };
  if (!flows) {
    emit(stem, maps[3]);
    return written;
  }
  for (Flow f : model.config().ablation.active_flows) emit(stem + kFlowSuffix[static_cast<int>(f)], maps[static_cast<int>(f)]);
  emit(stem + "_f", maps[3]);
  return written;
}

std::vector<std::filesystem::path> predict(const std::filesystem::path& ckpt, const std::filesystem::path& rgb,
                                           const std::filesystem::path& thermal, const std::filesystem::path& out_dir,
                                           const PredictOptions& opts) {
  const bool rgb_dir = std::filesystem::is_directory(rgb);
  if (rgb_dir != std::filesystem::is_directory(thermal)) {
    throw ConfigError("--rgb and --thermal must both be files or both be directories");
  }
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;
  if (rgb_dir) {
    const auto rgbs = list_images(rgb);
    const auto thermals = list_images(thermal);
    std::vector<std::string> missing;
    for (const auto& [stem, path] : rgbs) {
      auto it = thermals.find(stem);
      if (it == thermals.end()) {
        missing.push_back(stem);
      } else {
        pairs.emplace_back(path, it->second);
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw DataError("no thermal image for: " + list);
    }
    if (pairs.empty()) throw DataError("no images in " + rgb.string());
  } else {
    for (const auto& p : {rgb, thermal}) {
      if (!std::filesystem::is_regular_file(p)) throw DataError("cannot read image " + p.string());
    }
    pairs.emplace_back(rgb, thermal);
  }
  const ContriNet model = load_model(ckpt, opts.expected);
  std::vector<std::filesystem::path> written;
  for (const auto& [r, t] : pairs) {
    for (auto& p : predict_pair(model, r, t, out_dir, opts.flows)) written.push_back(std::move(p));
  }
  return written;
}

metrics::MetricReport evaluate_model(const ContriNet& model, const DatasetIndex& index) {
  std::vector<metrics::ImageRecord> records;
  std::vector<std::string> errors;
  for (const auto& t : index.triples) {
    try {
      const Tensor gt = read_mask(t.gt);
      const auto [h, w] = image_size(t.rgb);
      if (gt.h() != h || gt.w() != w) {
        errors.push_back(t.stem + ": GT size differs from the RGB image");
        continue;
      }
      records.push_back({t.stem, metrics::evaluate_image(predict_maps(model, t.rgb, t.thermal)[3], gt), {}});
    } catch (const DataError& e) {
      errors.push_back(t.stem + ": " + e.what());
    }
  }
  if (records.empty()) throw DataError("no image of " + index.root.string() + " could be evaluated");
  return metrics::summarize(std::move(records), std::move(errors));
}

}  // namespace contrinet
