#include "contrinet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "contrinet/config.hpp"
#include "contrinet/encoder.hpp"
#include "contrinet/heads.hpp"
#include "contrinet/mdam.hpp"
#include "contrinet/mfm.hpp"
#include "contrinet/model.hpp"
#include "contrinet/ops.hpp"
#include "contrinet/raspm.hpp"

namespace contrinet {
namespace {

constexpr std::array<int, 5> kChannels{4, 4, 8, 8, 8};
constexpr int kWidth = 8;
constexpr ForwardOptions kTrain{true, false};

struct Target {
  std::string name;
  Var var;
};

class Problem {
 public:
  explicit Problem(std::uint64_t seed) : rng_(seed), init_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  Tensor random(const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (double& v : t.storage()) v = u(rng_);
    return t;
  }
  Tensor random_mask(const Shape& shape) {
    Tensor t(shape);
    for (double& v : t.storage()) v = static_cast<double>(rng_() & 1U);
    return t;
  }
  Var input(const std::string& name, const Shape& shape) {
    Var v = Var::leaf(random(shape));
    targets.push_back({name, v});
    return v;
  }
  // sum(x * R) with a fresh fixed random R.
  std::function<Var(const Var&)> projection(const Shape& shape) {
    Tensor r = random(shape);
    return [r](const Var& x) { return ops::sum(ops::mul(x, Var::constant(r))); };
  }
  void add_params() {
    for (const auto& [key, entry] : store.entries()) {
      if (entry.trainable) targets.push_back({key, entry.var});
    }
  }
  ParamBuilder builder(const std::string& prefix) { return ParamBuilder(store, init_, prefix); }

  std::mt19937_64 rng_;
  Initializer init_;
  ParamStore store;
  std::vector<Target> targets;
  std::function<Var()> objective;
};

Pyramid random_pyramid(Problem& p, const std::string& name, int batch, const std::array<int, 5>& sizes) {
  Pyramid e;
  for (int i = 0; i < 5; ++i) e[i] = p.input(name + std::to_string(i + 1), {batch, kChannels[i], sizes[i], sizes[i]});
  return e;
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.backbone = Backbone::kToy;
  cfg.encoder_channels = kChannels;
  cfg.decoder_width = kWidth;
  cfg.se_reduction = 4;
  cfg.input_size = 64;
  return cfg;
}

// Every builder keeps its modules alive through the objective closure.
void build(const std::string& module, Problem& p) {
  if (module == "encoder") {
    auto enc = std::make_shared<ToyEncoder>(p.builder("encoder"), kChannels);
    Var x = p.input("image", {2, 3, 32, 32});
    std::vector<Var> probe;
    for (const Var& e : enc->forward(x, kTrain)) probe.push_back(e);
    std::vector<std::function<Var(const Var&)>> proj;
    for (const Var& e : probe) proj.push_back(p.projection(e.shape()));
    p.objective = [enc, x, proj] {
      const Pyramid e = enc->forward(x, kTrain);
      Var total = proj[0](e[0]);
      for (int i = 1; i < 5; ++i) total = ops::add(total, proj[i](e[i]));
      return total;
    };
  } else if (module == "mfm") {
    auto mfm = std::make_shared<Mfm>(p.builder("mfm"), small_config());
    const Pyramid e_r = random_pyramid(p, "e_r", 1, {16, 8, 4, 2, 1});
    const Pyramid e_t = random_pyramid(p, "e_t", 1, {16, 8, 4, 2, 1});
    std::vector<std::function<Var(const Var&)>> proj;
    for (const Var& e : mfm->forward(e_r, e_t)) proj.push_back(p.projection(e.shape()));
    p.objective = [mfm, e_r, e_t, proj] {
      const Pyramid e = mfm->forward(e_r, e_t);
      Var total = proj[0](e[0]);
      for (int i = 1; i < 5; ++i) total = ops::add(total, proj[i](e[i]));
      return total;
    };
  } else if (module == "raspm") {
    auto flow = std::make_shared<DecoderFlow>(p.builder("flow"), kChannels, kWidth, AblationConfig{});
    // Batch statistics over a handful of values are nearly singular, so the
    // coarse levels are kept at 4x4 and above.
    const Pyramid e = random_pyramid(p, "e", 2, {12, 10, 8, 6, 4});
    std::vector<std::function<Var(const Var&)>> proj;
    for (const Var& d : flow->decode(e, kTrain)) proj.push_back(p.projection(d.shape()));
    p.objective = [flow, e, proj] {
      const auto d = flow->decode(e, kTrain);
      Var total = proj[0](d[0]);
      for (int i = 1; i < 5; ++i) total = ops::add(total, proj[i](d[i]));
      return total;
    };
  } else if (module == "mdam") {
    auto mdam = std::make_shared<Mdam>(p.builder("mdam"), kWidth, MdamMode::kDynamic);
    const Shape s{2, kWidth, 8, 8};
    Var d_r = p.input("d_r", s), d_t = p.input("d_t", s), d_s = p.input("d_s", s);
    auto proj = p.projection(s);
    p.objective = [mdam, d_r, d_t, d_s, proj] { return proj(mdam->forward(d_r, d_t, d_s).out); };
  } else if (module == "heads") {
    auto heads = std::make_shared<Heads>(p.builder("head"), kWidth, AblationConfig{});
    const std::array<Var, 3> d1{p.input("d1_r", {2, kWidth, 8, 8}), p.input("d1_t", {2, kWidth, 8, 8}),
                                p.input("d1_s", {2, kWidth, 8, 8})};
    const Tensor gt = p.random_mask({2, 1, 16, 16});
    p.objective = [heads, d1, gt] { return total_loss(heads->predict(d1, 16, 16), gt, LossMode::kHybrid); };
  } else if (module == "full") {
    auto model = std::make_shared<ContriNet>(small_config());
    Var rgb = p.input("rgb", {1, 3, 64, 64});
    Var thermal = p.input("thermal", {1, 3, 64, 64});
    const Tensor gt = p.random_mask({1, 1, 64, 64});
    // Inference-mode normalisation with warmed-up running statistics: batch
    // statistics of the 2x2 coarsest maps are close to singular.
    {
      NoGradGuard guard;
      for (int i = 0; i < 3; ++i) model->forward(rgb, thermal, ForwardOptions{true, true});
    }
    for (const auto& [key, entry] : model->params().entries()) {
      if (entry.trainable) p.targets.push_back({key, entry.var});
    }
    p.objective = [model, rgb, thermal, gt] {
      return total_loss(model->forward(rgb, thermal, ForwardOptions{}), gt, LossMode::kHybrid);
    };
    return;
  } else {
    throw ConfigError("unknown gradcheck module '" + module + "'");
  }
  p.add_params();
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names{"encoder", "mfm", "raspm", "mdam", "heads", "full"};
  return names;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries) {
    tensors.push_back({{"name", e.name}, {"checked", e.checked}, {"refined", e.refined}, {"max_abs_error", e.max_abs_error},
                       {"rel_error", e.rel_error}});
  }
  return {{"module", module},       {"tolerance", tolerance}, {"max_rel_error", max_rel_error},
          {"passed", passed},       {"tensors", tensors}};
}

GradcheckReport gradcheck(const std::string& module, const GradcheckOptions& opts) {
  Problem p(opts.seed);
  build(module, p);
  const bool end_to_end = module == "full";
  const int max_coords = opts.max_coords >= 0 ? opts.max_coords : (end_to_end ? 4 : 0);

  for (Target& t : p.targets) t.var.zero_grad();
  backward(p.objective());

  auto evaluate = [&p] {
    NoGradGuard guard;
    return p.objective().value()[0];
  };

  GradcheckReport report;
  report.module = module;
  report.tolerance = end_to_end ? 1e-3 : 1e-4;
  std::mt19937_64 pick(opts.seed + 1);
  for (Target& t : p.targets) {
    const Tensor analytic = t.var.grad();
    Tensor& value = t.var.mutable_value();
    std::vector<std::size_t> coords(value.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords > 0 && coords.size() > static_cast<std::size_t>(max_coords)) {
      std::vector<std::size_t> chosen;
      std::sample(coords.begin(), coords.end(), std::back_inserter(chosen), max_coords, pick);
      coords = std::move(chosen);
    }
    GradcheckEntry entry{t.name, static_cast<int>(coords.size()), 0, 0.0, 0.0};
    double scale = 1e-3;
    for (std::size_t i : coords) {
      const double saved = value[i];
      auto central = [&](double h) {
        value[i] = saved + h;
        const double up = evaluate();
        value[i] = saved - h;
        const double down = evaluate();
        value[i] = saved;
        return (up - down) / (2.0 * h);
      };
      auto mismatch = [&](double numeric) {
        return std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3});
      };
      double numeric = central(opts.step);
      // A ReLU kink inside [x - h, x + h] spoils the difference quotient; a
      // genuine gradient error survives the smaller step.
      for (double h = opts.step / 10.0; h >= opts.step / 100.0 && mismatch(numeric) > 0.1 * report.tolerance;
           h /= 10.0) {
        numeric = central(h);
        ++entry.refined;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
    entry.rel_error = entry.max_abs_error / scale;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(entry);
  }
  report.passed = report.max_rel_error <= report.tolerance;
  return report;
}

}  // namespace contrinet
