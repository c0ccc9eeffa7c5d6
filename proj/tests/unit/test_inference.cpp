#include <gtest/gtest.h>

#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "contrinet/ablation.hpp"
#include "contrinet/errors.hpp"
#include "contrinet/gradcheck.hpp"
#include "contrinet/image_io.hpp"
#include "contrinet/inference.hpp"
#include "contrinet/training.hpp"
#include "synthetic.hpp"
#include "testing.hpp"

using namespace contrinet;

namespace {

std::filesystem::path fresh_checkpoint(const std::filesystem::path& dir, const ModelConfig& cfg) {
  const ContriNet model(cfg);
  Adam adam(model.params());
  const auto path = dir / "model.ckpt";
  save_checkpoint(path, cfg, TrainState{}, model.params(), adam.state());
  return path;
}

void write_pair(const std::filesystem::path& dir, const std::string& stem, int h, int w) {
  std::filesystem::create_directories(dir / "rgb");
  std::filesystem::create_directories(dir / "t");
  cv::Mat rgb(h, w, CV_8UC3), t(h, w, CV_8UC1);
  cv::randu(rgb, 0, 255);
  cv::randu(t, 0, 255);
  cv::imwrite((dir / "rgb" / (stem + ".png")).string(), rgb);
  cv::imwrite((dir / "t" / (stem + ".png")).string(), t);
}

}  // namespace

TEST(Predict, FlowsWriteFourFilesAtOriginalSize) {
  const auto dir = synthetic::temp_dir("predict_flows");
  const auto ckpt = fresh_checkpoint(dir, synthetic::toy_config(64, 8));
  write_pair(dir, "scene", 50, 70);
  PredictOptions o;
  o.flows = true;
  const auto files = predict(ckpt, dir / "rgb" / "scene.png", dir / "t" / "scene.png", dir / "out", o);
  ASSERT_EQ(files.size(), 4u);
  for (const char* suffix : {"_r", "_t", "_s", "_f"}) {
    const auto p = dir / "out" / (std::string("scene") + suffix + ".png");
    ASSERT_TRUE(std::filesystem::exists(p)) << p;
    EXPECT_EQ(image_size(p), (std::pair<int, int>{50, 70}));
  }
  std::filesystem::remove_all(dir);
}

TEST(Predict, DefaultWritesFusedMapOnlyAndMatchesMaps) {
  const auto dir = synthetic::temp_dir("predict_default");
  const auto cfg = synthetic::toy_config(64, 8);
  const auto ckpt = fresh_checkpoint(dir, cfg);
  write_pair(dir, "a", 40, 30);
  write_pair(dir, "b", 64, 64);
  const auto files = predict(ckpt, dir / "rgb", dir / "t", dir / "out");
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(image_size(dir / "out" / "a.png"), (std::pair<int, int>{40, 30}));
  const ContriNet model = load_model(ckpt);
  const auto maps = predict_maps(model, dir / "rgb" / "a.png", dir / "t" / "a.png");
  const Tensor written = read_gray(dir / "out" / "a.png");
  for (std::size_t i = 0; i < written.numel(); ++i) EXPECT_NEAR(written[i], maps[3][i], 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(Predict, ErrorsNameTheProblem) {
  const auto dir = synthetic::temp_dir("predict_err");
  const auto ckpt = fresh_checkpoint(dir, synthetic::toy_config(64, 8));
  write_pair(dir, "x", 32, 32);
  EXPECT_THROW(predict(ckpt, dir / "rgb" / "missing.png", dir / "t" / "x.png", dir / "out"), DataError);
  std::ofstream(dir / "rgb" / "bad.png") << "not an image";
  EXPECT_THROW(predict(ckpt, dir / "rgb" / "bad.png", dir / "t" / "x.png", dir / "out"), DataError);
  PredictOptions o;
  o.expected = synthetic::toy_config(64, 16);
  const std::string msg =
      error_of<ConfigError>([&] { predict(ckpt, dir / "rgb" / "x.png", dir / "t" / "x.png", dir / "out", o); });
  EXPECT_NE(msg.find("decoder_width"), std::string::npos) << msg;
  EXPECT_THROW(predict(ckpt, dir / "rgb", dir / "t" / "x.png", dir / "out"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Ablation, VariantParsing) {
  using nlohmann::json;
  EXPECT_EQ(error_of<ConfigError>([] { parse_variants(json::array()); }), "ablation variant list is empty");
  EXPECT_THROW(parse_variants(json{{"variants", json::array()}}), ConfigError);
  EXPECT_THROW(parse_variants(json::array({json{{"name", "a"}}, json{{"name", "a"}}})), ConfigError);
  const auto v = parse_variants(json{{"no_cfe", {{"ablation", {{"use_mfm_cfe", false}}}}}});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].name, "no_cfe");
  const std::string msg = error_of<ConfigError>([] {
    resolve_variants(synthetic::toy_config(), parse_variants(json::array({json{{"name", "broken"}, {"delta", {{"input_size", 30}}}}})));
  });
  EXPECT_NE(msg.find("broken"), std::string::npos) << msg;
}

TEST(Ablation, StandardVariantsAllResolveAndDiffer) {
  const auto base = synthetic::toy_config(32, 8);
  const auto variants = standard_variants();
  const auto cfgs = resolve_variants(base, variants);
  ASSERT_EQ(cfgs.size(), variants.size());
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    if (variants[i].name == "full") continue;
    EXPECT_FALSE(config_differences(base, cfgs[i]).empty()) << variants[i].name;
  }
}

TEST(Ablation, TwoVariantRowsWithMetrics) {
  const auto dir = synthetic::temp_dir("ablate");
  synthetic::write_dataset(dir / "data", synthetic::ellipses(2, 32, 1));
  ModelConfig base = synthetic::toy_config(32, 8);
  base.training.epochs = 1;
  base.training.batch_size = 2;
  const auto variants = parse_variants(nlohmann::json::array(
      {{{"name", "flows_x3"}}, {{"name", "flows_x1"}, {"delta", {{"ablation", {{"active_flows", {"complementary"}}, {"mdam_mode", "none"}}}}}}}));
  AblationOptions o;
  o.out_dir = dir / "runs";
  const AblationReport r = run_ablation(base, variants, dir / "data", o);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].name, "flows_x3");
  EXPECT_EQ(r.rows[1].images, 2);
  EXPECT_GT(r.rows[0].complexity.params, r.rows[1].complexity.params);
  const auto j = r.to_json();
  for (const auto& row : j["rows"])
    for (const char* k : {"sm", "fbeta_mean", "fbeta_weighted", "em_mean", "mae"}) EXPECT_TRUE(row["metrics"].contains(k));
  EXPECT_TRUE(std::filesystem::exists(dir / "runs" / "flows_x1" / "checkpoint_last.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST(Gradcheck, UnknownModuleIsAnError) {
  const std::string msg = error_of<ConfigError>([] { gradcheck("decoder"); });
  EXPECT_NE(msg.find("decoder"), std::string::npos) << msg;
}

TEST(Gradcheck, MdamAndHeadsPass) {
  for (const char* module : {"mdam", "heads"}) {
    const GradcheckReport r = gradcheck(module);
    EXPECT_TRUE(r.passed) << module << " " << r.max_rel_error;
    EXPECT_LE(r.max_rel_error, 1e-4);
    EXPECT_FALSE(r.entries.empty());
  }
}
