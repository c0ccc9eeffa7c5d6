#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "contrinet/errors.hpp"
#include "contrinet/ops.hpp"
#include "contrinet/training.hpp"
#include "synthetic.hpp"
#include "testing.hpp"

using namespace contrinet;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ModelConfig small_run() {
  ModelConfig cfg = synthetic::toy_config(32, 8);
  cfg.training.batch_size = 2;
  cfg.training.epochs = 2;
  cfg.training.seed = 5;
  return cfg;
}

std::vector<double> losses_of(const std::filesystem::path& log) {
  std::ifstream in(log);
  std::vector<double> out;
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line)["loss"].get<double>());
  return out;
}

}  // namespace

TEST(Schedule, CosineEndpoints) {
  TrainingConfig tc;
  EXPECT_DOUBLE_EQ(learning_rate(tc, 0, 100), 5e-5);
  EXPECT_NEAR(learning_rate(tc, 50, 100), 2.5e-5, 1e-18);
  EXPECT_LT(learning_rate(tc, 99, 100), 1e-7);
  tc.schedule = Schedule::kConstant;
  EXPECT_DOUBLE_EQ(learning_rate(tc, 99, 100), 5e-5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore s;
  const Var p = s.add("p", Tensor({1, 1, 1, 2}, std::vector<double>{1.0, -1.0}));
  Adam adam(s);
  backward(ops::sum(ops::mul(p, Var::constant(Tensor({1, 1, 1, 2}, std::vector<double>{3.0, -0.5})))));
  adam.step(s, 0.1);
  EXPECT_NEAR(s.tensor("p")[0], 0.9, 1e-8);
  EXPECT_NEAR(s.tensor("p")[1], -0.9, 1e-7);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Training, DeterministicRunsAreBitwiseIdentical) {
  const auto samples = synthetic::ellipses(4, 32, 1);
  const auto dir = synthetic::temp_dir("det");
  TrainOptions o;
  o.deterministic = true;
  const TrainResult a = train_samples(small_run(), samples, dir / "a", o);
  const TrainResult b = train_samples(small_run(), samples, dir / "b", o);
  EXPECT_EQ(a.steps, 4);
  EXPECT_TRUE(read_bytes(a.checkpoint) == read_bytes(b.checkpoint));
  EXPECT_TRUE(read_bytes(dir / "a" / "train_log.jsonl") == read_bytes(dir / "b" / "train_log.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  const auto samples = synthetic::ellipses(4, 32, 2);
  const auto dir = synthetic::temp_dir("resume");
  TrainOptions full;
  full.deterministic = true;
  const TrainResult whole = train_samples(small_run(), samples, dir / "whole", full);

  TrainOptions first = full;
  first.stop_at_step = 2;
  const TrainResult half = train_samples(small_run(), samples, dir / "split", first);
  EXPECT_EQ(half.steps, 2);
  TrainOptions second = full;
  second.resume_from = half.checkpoint;
  const TrainResult rest = train_samples(small_run(), samples, dir / "split", second);
  EXPECT_EQ(rest.steps, 4);
  EXPECT_EQ(losses_of(dir / "whole" / "train_log.jsonl"), losses_of(dir / "split" / "train_log.jsonl"));
  EXPECT_TRUE(read_bytes(whole.checkpoint) == read_bytes(rest.checkpoint));
  std::filesystem::remove_all(dir);
}

TEST(Training, ResumeRejectsDifferentConfig) {
  const auto samples = synthetic::ellipses(2, 32, 3);
  const auto dir = synthetic::temp_dir("resume_cfg");
  TrainOptions o;
  o.stop_at_step = 1;
  const TrainResult r = train_samples(small_run(), samples, dir, o);
  ModelConfig other = small_run();
  other.training.lr = 1e-3;
  TrainOptions again;
  again.resume_from = r.checkpoint;
  const std::string msg = error_of<ConfigError>([&] { train_samples(other, samples, dir / "x", again); });
  EXPECT_NE(msg.find("training.lr"), std::string::npos) << msg;
  std::filesystem::remove_all(dir);
}

TEST(Training, DataErrorsFailBeforeFirstStep) {
  const auto dir = synthetic::temp_dir("bad_data");
  EXPECT_THROW(train_samples(small_run(), {}, dir), DataError);
  EXPECT_THROW(train_samples(small_run(), synthetic::ellipses(1, 64, 1), dir), DataError);
  EXPECT_FALSE(std::filesystem::exists(dir / "train_log.jsonl"));
  synthetic::write_dataset(dir / "root", synthetic::ellipses(2, 32, 1));
  std::filesystem::remove(dir / "root" / "GT" / "s1.png");
  const std::string msg = error_of<DataError>([&] { train(small_run(), dir / "root", dir / "out"); });
  EXPECT_NE(msg.find("s1"), std::string::npos) << msg;
  std::filesystem::remove_all(dir);
}

TEST(Training, NonFiniteInputAbortsWithDump) {
  auto samples = synthetic::ellipses(2, 32, 4);
  samples[0].rgb[10] = std::nan("");
  const auto dir = synthetic::temp_dir("nan");
  ModelConfig cfg = small_run();
  cfg.training.augment = false;
  EXPECT_THROW(train_samples(cfg, samples, dir), NumericError);
  EXPECT_TRUE(std::filesystem::exists(dir / "numeric_failure.json"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RoundTripAndConfigCheck) {
  const auto samples = synthetic::ellipses(2, 32, 5);
  const auto dir = synthetic::temp_dir("ckpt");
  const TrainResult r = train_samples(small_run(), samples, dir);
  const Checkpoint ck = load_checkpoint(r.checkpoint);
  EXPECT_EQ(ck.config, validate_config(small_run()));
  EXPECT_EQ(ck.state.step, 2);
  const ContriNet model = load_model(r.checkpoint);
  for (const auto& key : ck.params.keys()) EXPECT_EQ(model.params().tensor(key), ck.params.tensor(key));
  ModelConfig wrong = small_run();
  wrong.decoder_width = 16;
  const std::string msg = error_of<ConfigError>([&] { load_model(r.checkpoint, wrong); });
  EXPECT_NE(msg.find("decoder_width"), std::string::npos) << msg;
  std::ofstream(dir / "junk.ckpt") << "junk";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), FormatError);
  std::filesystem::remove_all(dir);
}
