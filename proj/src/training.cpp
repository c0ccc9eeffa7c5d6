#include "contrinet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <opencv2/core/utility.hpp>

#include "binary_io.hpp"
#include "contrinet/errors.hpp"

namespace contrinet {
namespace {

constexpr char kCheckpointMagic[4] = {'C', 'T', 'N', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string dump_line(const nlohmann::json& j) { return j.dump(); }

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, static_cast<std::uint64_t>(epoch), 0x5eedULL);
  // Fisher-Yates with explicit modulo so the order does not depend on the
  // standard library's distribution implementation.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

void write_failure_dump(const std::filesystem::path& out_dir, std::int64_t step, double loss,
                        const std::vector<const Sample*>& batch, const ParamStore& params) {
  nlohmann::json dump;
  dump["step"] = step;
  dump["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(std::to_string(loss));
  dump["samples"] = nlohmann::json::array();
  for (const Sample* s : batch) dump["samples"].push_back(s->name);
  dump["non_finite_parameters"] = nlohmann::json::array();
  dump["non_finite_gradients"] = nlohmann::json::array();
  for (const auto& [key, e] : params.entries()) {
    if (!e.var.value().all_finite()) dump["non_finite_parameters"].push_back(key);
    if (e.trainable && !e.var.grad().all_finite()) dump["non_finite_gradients"].push_back(key);
  }
  std::ofstream(out_dir / "numeric_failure.json") << dump.dump(2) << "\n";
}

}  // namespace

Adam::Adam(const ParamStore& params) {
  for (const auto& [key, e] : params.entries()) {
    if (!e.trainable) continue;
    state_.add("m." + key, Tensor::zeros_like(e.var.value()), false);
    state_.add("v." + key, Tensor::zeros_like(e.var.value()), false);
  }
}

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (const auto& [key, e] : params.entries()) {
    if (!e.trainable) continue;
    Tensor& p = params.tensor(key);
    const Tensor& g = e.var.grad();
    Tensor& m = state_.tensor("m." + key);
    Tensor& v = state_.tensor("v." + key);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  }
}

void Adam::load_state(const ParamStore& state, std::int64_t steps) {
  state_.copy_values_from(state);
  t_ = steps;
}

double learning_rate(const TrainingConfig& cfg, std::int64_t step, std::int64_t total) {
  if (cfg.schedule == Schedule::kConstant || total <= 0) return cfg.lr;
  return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

nlohmann::json TrainState::to_json() const {
  return {{"step", step},
          {"total_steps", total_steps},
          {"steps_per_epoch", steps_per_epoch},
          {"seed", seed},
          {"last_loss", last_loss}};
}

TrainState TrainState::from_json(const nlohmann::json& j) {
  TrainState s;
  try {
    s.step = j.at("step").get<std::int64_t>();
    s.total_steps = j.at("total_steps").get<std::int64_t>();
    s.steps_per_epoch = j.at("steps_per_epoch").get<std::int64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.last_loss = j.at("last_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid training state: ") + e.what());
  }
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const TrainState& state,
                     const ParamStore& params, const ParamStore& optimizer) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(kCheckpointMagic, 4);
    detail::write_pod(out, kCheckpointVersion);
    detail::write_string(out, to_json(cfg).dump());
    detail::write_string(out, state.to_json().dump());
    write_params(out, params);
    write_params(out, optimizer);
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = detail::read_pod<std::uint32_t>(in, "checkpoint header");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  nlohmann::json cfg_json, state_json;
  try {
    cfg_json = nlohmann::json::parse(detail::read_string(in, "checkpoint config"));
    state_json = nlohmann::json::parse(detail::read_string(in, "checkpoint training state"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  Checkpoint ck{validate_config(cfg_json), TrainState::from_json(state_json), read_params(in), read_params(in)};
  return ck;
}

void assign_params(ContriNet& model, const ParamStore& params) {
  ParamStore& dst = model.params();
  for (const auto& [key, e] : dst.entries()) {
    if (!params.contains(key)) throw ConfigError("checkpoint lacks parameter '" + key + "' required by the config");
    if (params.tensor(key).shape() != e.var.shape()) {
      throw ConfigError("parameter '" + key + "' has shape " + to_string(params.tensor(key).shape()) +
                        " in the checkpoint but " + to_string(e.var.shape()) + " in the config");
    }
  }
  for (const auto& [key, _] : params.entries()) {
    if (!dst.contains(key)) throw ConfigError("checkpoint parameter '" + key + "' is not part of the config");
  }
  dst.copy_values_from(params);
}

ContriNet load_model(const std::filesystem::path& ckpt, const std::optional<ModelConfig>& expected) {
  Checkpoint ck = load_checkpoint(ckpt);
  if (expected) {
    const auto diffs = config_differences(*expected, ck.config);
    if (!diffs.empty()) {
      std::string fields;
      for (const auto& d : diffs) fields += (fields.empty() ? "" : ", ") + d;
      throw ConfigError("checkpoint config differs from the expected config in: " + fields);
    }
  }
  ContriNet model(ck.config);
  assign_params(model, ck.params);
  return model;
}

void stack_batch(const std::vector<const Sample*>& batch, Tensor& rgb, Tensor& thermal, Tensor& gt) {
  const Shape s = batch.front()->rgb.shape();
  const int b = static_cast<int>(batch.size());
  rgb = Tensor({b, 3, s[2], s[3]});
  thermal = Tensor({b, 3, s[2], s[3]});
  gt = Tensor({b, 1, s[2], s[3]});
  const std::size_t img = 3 * static_cast<std::size_t>(s[2]) * s[3];
  const std::size_t mask = static_cast<std::size_t>(s[2]) * s[3];
  for (int i = 0; i < b; ++i) {
    const Sample& smp = *batch[i];
    require_same_shape(smp.rgb.shape(), s, "batch rgb");
    require_same_shape(smp.thermal.shape(), s, "batch thermal");
    std::copy_n(smp.rgb.data(), img, rgb.data() + i * img);
    std::copy_n(smp.thermal.data(), img, thermal.data() + i * img);
    std::copy_n(smp.gt.data(), mask, gt.data() + i * mask);
  }
}

std::vector<Tensor> predict_samples(const ContriNet& model, const std::vector<Sample>& samples) {
  NoGradGuard no_grad;
  std::vector<Tensor> out;
  for (const Sample& s : samples) {
    out.push_back(model.forward(Var::constant(s.rgb), Var::constant(s.thermal), ForwardOptions{}).m_f.value());
  }
  return out;
}

TrainResult train_samples(const ModelConfig& cfg_in, const std::vector<Sample>& samples,
                          const std::filesystem::path& out_dir, const TrainOptions& opts) {
  const ModelConfig cfg = validate_config(cfg_in);
  if (samples.empty()) throw DataError("no training samples");
  for (const Sample& s : samples) {
    if (s.rgb.h() != cfg.input_size || s.rgb.w() != cfg.input_size) {
      throw DataError("sample '" + s.name + "' is not preprocessed to input_size " + std::to_string(cfg.input_size));
    }
  }
  if (opts.deterministic) cv::setNumThreads(1);
  std::filesystem::create_directories(out_dir);

  const TrainingConfig& tc = cfg.training;
  const auto n = static_cast<std::int64_t>(samples.size());
  const std::int64_t per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  TrainState state;
  state.steps_per_epoch = per_epoch;
  state.total_steps = per_epoch * tc.epochs;
  state.seed = tc.seed;

  ContriNet model(cfg);
  Adam adam(model.params());
  if (opts.resume_from) {
    Checkpoint ck = load_checkpoint(*opts.resume_from);
    const auto diffs = config_differences(cfg, ck.config);
    if (!diffs.empty()) {
      std::string fields;
      for (const auto& d : diffs) fields += (fields.empty() ? "" : ", ") + d;
      throw ConfigError("cannot resume: checkpoint config differs in " + fields);
    }
    if (ck.state.total_steps != state.total_steps) {
      throw ConfigError("cannot resume: dataset size changed (checkpoint expects " +
                        std::to_string(ck.state.steps_per_epoch) + " steps per epoch)");
    }
    assign_params(model, ck.params);
    adam.load_state(ck.optimizer, ck.state.step);
    state = ck.state;
  }

  std::ofstream log(out_dir / "train_log.jsonl", opts.resume_from ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open training log in " + out_dir.string());

  const std::int64_t end = opts.stop_at_step ? std::min(*opts.stop_at_step, state.total_steps) : state.total_steps;
  std::vector<std::size_t> order;
  std::int64_t order_epoch = -1;
  ParamStore& params = model.params();
  const ForwardOptions fwd{true, true};
  TrainResult result;

  for (std::int64_t step = state.step; step < end; ++step) {
    const std::int64_t epoch = step / per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(tc.seed, epoch, samples.size());
      order_epoch = epoch;
    }
    const std::int64_t pos = step % per_epoch;
    const std::size_t first = static_cast<std::size_t>(pos * tc.batch_size);
    const std::size_t last = std::min(samples.size(), first + tc.batch_size);

    std::vector<Sample> augmented;
    std::vector<const Sample*> batch;
    augmented.reserve(last - first);
    for (std::size_t j = first; j < last; ++j) {
      const Sample& s = samples[order[j]];
      if (tc.augment) {
        auto rng = make_rng(tc.seed, static_cast<std::uint64_t>(step), j - first);
        augmented.push_back(augment(s, draw_augment(tc, rng)));
        batch.push_back(&augmented.back());
      } else {
        batch.push_back(&s);
      }
    }
    Tensor rgb, thermal, gt;
    stack_batch(batch, rgb, thermal, gt);

    params.zero_grad();
    const SaliencyBundle out = model.forward(Var::constant(rgb), Var::constant(thermal), fwd);
    const Var loss = total_loss(out, gt, cfg.ablation.loss);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) {
      write_failure_dump(out_dir, step + 1, loss_value, batch, params);
      throw NumericError("non-finite loss at step " + std::to_string(step + 1) + "; see numeric_failure.json");
    }
    backward(loss);
    for (const auto& [key, e] : params.entries()) {
      if (e.trainable && !e.var.grad().all_finite()) {
        write_failure_dump(out_dir, step + 1, loss_value, batch, params);
        throw NumericError("non-finite gradient for '" + key + "' at step " + std::to_string(step + 1));
      }
    }
    const double lr = learning_rate(tc, step, state.total_steps);
    adam.step(params, lr);

    state.step = step + 1;
    state.last_loss = loss_value;
    const nlohmann::json record{{"step", state.step}, {"epoch", epoch + 1}, {"lr", lr}, {"loss", loss_value}};
    log << dump_line(record) << "\n";
    log.flush();
    if (opts.on_step) opts.on_step(record);
    if (tc.checkpoint_every > 0 && state.step % tc.checkpoint_every == 0) {
      save_checkpoint(out_dir / ("checkpoint_step" + std::to_string(state.step) + ".ckpt"), cfg, state, params,
                      adam.state());
    }
  }

  result.steps = state.step;
  result.final_loss = state.last_loss;
  result.checkpoint = out_dir / "checkpoint_last.ckpt";
  save_checkpoint(result.checkpoint, cfg, state, params, adam.state());
  return result;
}

TrainResult train(const ModelConfig& cfg, const std::filesystem::path& data_root, const std::filesystem::path& out_dir,
                  const TrainOptions& opts) {
  const ModelConfig valid = validate_config(cfg);
  const DatasetIndex index = load_dataset(data_root);
  if (!index.missing.empty()) {
    std::string list;
    for (const auto& m : index.missing) list += "\n  " + m;
    throw DataError("incomplete triples under " + data_root.string() + ":" + list);
  }
  return train_samples(valid, load_samples(index, valid.input_size), out_dir, opts);
}

}  // namespace contrinet
