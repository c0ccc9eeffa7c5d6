#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "contrinet/ablation.hpp"
#include "contrinet/errors.hpp"
#include "contrinet/gradcheck.hpp"
#include "contrinet/inference.hpp"
#include "contrinet/metrics.hpp"
#include "contrinet/model.hpp"
#include "contrinet/training.hpp"

namespace fs = std::filesystem;
using namespace contrinet;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct TrainArgs {
  std::string config, data_root, out, resume;
  bool deterministic = false;
  std::int64_t stop_at = -1;
};

int run_train(const TrainArgs& a) {
  const ModelConfig cfg = load_config(a.config);
  TrainOptions opts;
  opts.deterministic = a.deterministic;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  if (a.stop_at >= 0) opts.stop_at_step = a.stop_at;
  opts.on_step = [](const nlohmann::json& rec) { std::cout << rec.dump() << '\n'; };
  const TrainResult r = train(cfg, a.data_root, a.out, opts);
  std::cout << nlohmann::json{{"steps", r.steps}, {"final_loss", r.final_loss}, {"checkpoint", r.checkpoint.string()}}
            << '\n';
  return kOk;
}

struct PredictArgs {
  std::string ckpt, rgb, thermal, out, config;
  bool flows = false;
};

int run_predict(const PredictArgs& a) {
  PredictOptions opts;
  opts.flows = a.flows;
  if (!a.config.empty()) opts.expected = load_config(a.config);
  for (const fs::path& p : predict(a.ckpt, a.rgb, a.thermal, a.out, opts)) std::cout << p.string() << '\n';
  return kOk;
}

struct EvalArgs {
  std::string pred_dir, gt_dir, attributes, report;
};

int run_eval(const EvalArgs& a) {
  std::optional<fs::path> attrs;
  if (!a.attributes.empty()) attrs = a.attributes;
  const metrics::MetricReport r = metrics::evaluate_dirs(a.pred_dir, a.gt_dir, attrs);
  const nlohmann::json j = r.to_json();
  write_json(a.report, j);
  std::cout << j["aggregate"].dump() << '\n';
  for (const auto& e : r.errors) std::cerr << "error: " << e << '\n';
  return kOk;
}

struct AblateArgs {
  std::string base, variants, data_root, eval_root, out = "ablation", report;
  bool standard = false;
};

int run_ablate(const AblateArgs& a) {
  const ModelConfig base = load_config(a.base);
  if (a.variants.empty() == !a.standard) throw ConfigError("give exactly one of --variants and --standard");
  const auto variants = a.standard ? standard_variants() : load_variants(a.variants);
  AblationOptions opts;
  opts.out_dir = a.out;
  if (!a.eval_root.empty()) opts.eval_root = a.eval_root;
  const AblationReport r = run_ablation(base, variants, a.data_root, opts);
  const nlohmann::json j = r.to_json();
  write_json(a.report.empty() ? fs::path(a.out) / "ablation_report.json" : fs::path(a.report), j);
  for (const auto& row : j["rows"]) std::cout << row.dump() << '\n';
  return kOk;
}

struct GradcheckArgs {
  std::string module, report;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  GradcheckOptions opts;
  opts.seed = a.seed;
  const GradcheckReport r = gradcheck(a.module, opts);
  if (!a.report.empty()) write_json(a.report, r.to_json());
  std::cout << nlohmann::json{{"module", r.module}, {"max_rel_error", r.max_rel_error}, {"tolerance", r.tolerance},
                              {"passed", r.passed}}
            << '\n';
  return r.passed ? kOk : kNumeric;
}

int run_count(const std::string& config) {
  const Complexity c = count_complexity(load_config(config));
  std::cout << nlohmann::json{{"params", c.params}, {"macs", c.macs}} << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-thermal salient object detection: training, inference, evaluation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model on <data-root>/{RGB,T,GT}");
  train_cmd->add_option("--config", train_args.config, "config JSON")->required();
  train_cmd->add_option("--data-root", train_args.data_root, "dataset root")->required();
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_cmd->add_flag("--deterministic", train_args.deterministic, "single-threaded, bitwise reproducible");
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train_cmd->add_option("--stop-at", train_args.stop_at, "stop after this many steps");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "write saliency maps for an image pair or two directories");
  predict_cmd->add_option("--ckpt", predict_args.ckpt, "checkpoint")->required();
  predict_cmd->add_option("--rgb", predict_args.rgb, "RGB image or directory")->required();
  predict_cmd->add_option("--thermal", predict_args.thermal, "thermal image or directory")->required();
  predict_cmd->add_option("--out", predict_args.out, "output directory")->required();
  predict_cmd->add_flag("--flows", predict_args.flows, "also write the per-flow maps");
  predict_cmd->add_option("--config", predict_args.config, "require the checkpoint to match this config");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score prediction maps against ground truth");
  eval_cmd->add_option("--pred-dir", eval_args.pred_dir, "prediction directory")->required();
  eval_cmd->add_option("--gt-dir", eval_args.gt_dir, "ground-truth directory")->required();
  eval_cmd->add_option("--attributes", eval_args.attributes, "CSV: filename,tag1;tag2");
  eval_cmd->add_option("--report", eval_args.report, "report JSON")->required();

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score config variants side by side");
  ablate_cmd->add_option("--base", ablate_args.base, "base config JSON")->required();
  ablate_cmd->add_option("--variants", ablate_args.variants, "variants JSON");
  ablate_cmd->add_flag("--standard", ablate_args.standard, "use the built-in component and framework variants");
  ablate_cmd->add_option("--data-root", ablate_args.data_root, "training data root")->required();
  ablate_cmd->add_option("--eval-root", ablate_args.eval_root, "evaluation data root (default: training root)");
  ablate_cmd->add_option("--out", ablate_args.out, "working directory")->capture_default_str();
  ablate_cmd->add_option("--report", ablate_args.report, "report JSON (default: <out>/ablation_report.json)");

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad_cmd->add_option("--module", grad_args.module, "encoder, mfm, raspm, mdam, heads or full")->required();
  grad_cmd->add_option("--seed", grad_args.seed, "random seed");
  grad_cmd->add_option("--report", grad_args.report, "per-tensor report JSON");

  std::string count_config;
  auto* count_cmd = app.add_subcommand("count", "parameter and MAC count at the configured input size");
  count_cmd->add_option("--config", count_config, "config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*predict_cmd) return run_predict(predict_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*ablate_cmd) return run_ablate(ablate_args);
    if (*grad_cmd) return run_gradcheck(grad_args);
    if (*count_cmd) return run_count(count_config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
