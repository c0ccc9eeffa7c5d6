// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "contrinet/ablation.hpp"
#include "contrinet/gradcheck.hpp"
#include "contrinet/heads.hpp"
#include "contrinet/inference.hpp"
#include "contrinet/mdam.hpp"
#include "contrinet/metrics.hpp"
#include "contrinet/mfm.hpp"
#include "contrinet/ops.hpp"
#include "contrinet/raspm.hpp"
#include "contrinet/training.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"
#include "testing.hpp"

using namespace contrinet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED(" << what << ")";
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Largest deviation seen while comparing against the loop oracles.
struct Worst {
  double value = 0.0;
  std::string where;
  void see(double d, const std::string& what) {
    if (d > value) value = d, where = what;
  }
};

void criterion_oracles(Outcome& o) {
  Worst w;
  std::mt19937_64 rng(101);
  const AblationConfig defaults;
  for (bool cfe : {true, false}) {
    for (bool aff : {true, false}) {
      AblationConfig a;
      a.use_mfm_cfe = cfe;
      a.use_mfm_aff = aff;
      Bench b(1);
      MfmLevel l1(b.builder("mfm.level1"), 4, 0, 2, a), l2(b.builder("mfm.level2"), 4, 4, 2, a);
      const Tensor r1 = oracle::random_tensor({1, 4, 8, 8}, rng), t1 = oracle::random_tensor({1, 4, 8, 8}, rng);
      const Tensor r2 = oracle::random_tensor({1, 4, 4, 4}, rng), t2 = oracle::random_tensor({1, 4, 4, 4}, rng);
      const Var s1 = l1.modulate(leaf(r1), leaf(t1));
      const Tensor o1 = oracle::mfm_modulate(b.store, "mfm.level1", r1, t1, cfe, aff);
      w.see(oracle::max_abs_diff(s1.value(), o1), "mfm modulate");
      w.see(oracle::max_abs_diff(l1.cascade(s1, Var()).value(), oracle::mfm_cascade(b.store, "mfm.level1", o1, Tensor())),
            "mfm cascade level 1");
      const Var s2 = l2.modulate(leaf(r2), leaf(t2));
      const Tensor o2 = oracle::mfm_modulate(b.store, "mfm.level2", r2, t2, cfe, aff);
      w.see(oracle::max_abs_diff(l2.cascade(s2, leaf(o1)).value(), oracle::mfm_cascade(b.store, "mfm.level2", o2, o1)),
            "mfm cascade level 2");
    }
  }
  for (bool atrous : {true, false}) {
    Bench b(2);
    Raspm r(b.builder("r"), 4, 8, atrous);
    const Tensor phi = oracle::random_tensor({1, 4, 8, 8}, rng);
    w.see(oracle::max_abs_diff(r.forward(leaf(phi), {true, false}).value(), oracle::raspm(b.store, "r", phi, atrous)),
          "raspm");
  }
  const std::vector<std::pair<MdamMode, std::string>> modes{
      {MdamMode::kDynamic, "dynamic"}, {MdamMode::kFixedWeights, "fixed_weights"}, {MdamMode::kNoDoe, "no_doe"}};
  for (const auto& [mode, name] : modes) {
    Bench b(3);
    Mdam m(b.builder("m"), 4, mode);
    const Tensor dr = oracle::random_tensor({1, 4, 8, 8}, rng), dt = oracle::random_tensor({1, 4, 8, 8}, rng),
                 ds = oracle::random_tensor({1, 4, 8, 8}, rng);
    w.see(oracle::max_abs_diff(m.forward(leaf(dr), leaf(dt), leaf(ds)).out.value(),
                               oracle::mdam(b.store, "m", dr, dt, ds, name)),
          "mdam " + name);
  }
  {
    Bench b(4);
    Heads h(b.builder("head"), 4, defaults);
    const Tensor d1 = oracle::random_tensor({1, 4, 4, 4}, rng);
    w.see(oracle::max_abs_diff(h.logits(Flow::kComplementary, leaf(d1), 8, 8).value(),
                               oracle::head_logits(b.store, "head.complementary", d1, 8, 8)),
          "head");
  }
  const Tensor g = oracle::random_mask({1, 1, 8, 8}, rng);
  const Tensor z = oracle::random_tensor({1, 1, 8, 8}, rng, -4, 4);
  const Tensor m = oracle::sigmoid(z), pw = oracle::pixel_weights(g);
  w.see(oracle::max_abs_diff(pixel_weights(g), pw), "pixel weights");
  w.see(std::abs(ops::weighted_bce(leaf(m), g, pw).value()[0] - oracle::wbce(m, g, pw)), "wbce");
  w.see(std::abs(ops::weighted_iou(leaf(m), g, pw).value()[0] - oracle::wiou(m, g, pw)), "wiou");
  w.see(std::abs(ops::weighted_bce_with_logits(leaf(z), g, pw).value()[0] - oracle::wbce(m, g, pw, 0.0)),
        "wbce logits");
  w.see(std::abs(ops::weighted_iou_with_logits(leaf(z), g, pw).value()[0] - oracle::wiou(m, g, pw)), "wiou logits");
  o.detail << "max deviation " << fmt(w.value) << " (" << w.where << ")";
  o.require(w.value <= 1e-6, "deviation above 1e-6");
}

void criterion_gradcheck(Outcome& o) {
  for (const std::string& module : gradcheck_modules()) {
    const GradcheckReport r = gradcheck(module);
    o.detail << module << " " << fmt(r.max_rel_error) << "/" << fmt(r.tolerance) << "; ";
    const double bar = module == "full" ? 1e-3 : 1e-4;
    o.require(r.passed && r.max_rel_error <= bar, module);
  }
}

void criterion_invariants(Outcome& o) {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst_sum = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    Bench b(draw);
    Mdam m(b.builder("m"), 4, MdamMode::kDynamic);
    const Tensor f_a = oracle::random_tensor({dim(rng), 4, dim(rng), dim(rng)}, rng, -20, 20);
    const auto [alpha, beta] = m.dynamic_weights(leaf(f_a));
    for (int n = 0; n < f_a.n(); ++n) {
      worst_sum = std::max(worst_sum, std::abs(alpha.value()[n] + beta.value()[n] - 1.0));
      o.require(alpha.value()[n] > 0.0 && alpha.value()[n] < 1.0, "alpha outside (0,1)");
    }
  }
  o.detail << "alpha+beta-1 max " << fmt(worst_sum);
  o.require(worst_sum <= 1e-9, "alpha+beta != 1");

  int gates = 0;
  auto in_unit = [&](const Var& v, const std::string& what) {
    for (double x : v.value().values()) {
      ++gates;
      if (!(x > 0.0 && x < 1.0)) {
        o.require(false, what + " gate outside (0,1)");
        return;
      }
    }
  };
  for (int trial = 0; trial < 20; ++trial) {
    Bench b(trial);
    MfmLevel l(b.builder("mfm.level1"), 4, 0, 2, AblationConfig{});
    Mdam m(b.builder("m"), 4, MdamMode::kDynamic);
    const Tensor x = oracle::random_tensor({2, 4, 7, 9}, rng, -3, 3), y = oracle::random_tensor({2, 4, 7, 9}, rng, -3, 3);
    in_unit(l.gate_r(leaf(x)), "mfm rgb");
    in_unit(l.gate_t(leaf(y)), "mfm thermal");
    in_unit(l.channel_gate(leaf(x)), "mfm channel");
    in_unit(l.spatial_attention(ops::concat_channels({leaf(x), leaf(y)})), "mfm spatial");
    in_unit(m.forward(leaf(x), leaf(y), leaf(x)).f_doe, "mdam detail");
  }
  o.detail << "; " << gates << " gate values";

  int shapes = 0;
  for (int h : {7, 13, 32}) {
    for (int wd : {7, 13, 32}) {
      Bench b(h * 100 + wd);
      MfmLevel l(b.builder("mfm.level2"), 4, 4, 2, AblationConfig{});
      Raspm r(b.builder("r"), 4, 4, true);
      Mdam m(b.builder("m"), 4, MdamMode::kDynamic);
      const Tensor x = oracle::random_tensor({1, 4, h, wd}, rng), y = oracle::random_tensor({1, 4, h, wd}, rng);
      const Tensor prev = oracle::random_tensor({1, 4, 2 * h, 2 * wd}, rng);
      const Var e_s = l.modulate(leaf(x), leaf(y));
      o.require(e_s.shape() == x.shape(), "mfm modulate shape");
      o.require(l.cascade(e_s, leaf(prev)).shape() == x.shape(), "mfm cascade shape");
      o.require(r.forward(leaf(x), {true, false}).shape() == x.shape(), "raspm shape");
      o.require(m.forward(leaf(x), leaf(y), leaf(x)).out.shape() == x.shape(), "mdam shape");
      shapes += 4;
    }
  }
  o.detail << "; " << shapes << " shape checks";

  for (MdamMode mode : {MdamMode::kDynamic, MdamMode::kFixedWeights, MdamMode::kNoDoe}) {
    Bench b(9);
    Mdam m(b.builder("m"), 8, mode);
    b.zero_all();
    const Tensor dr = oracle::random_tensor({2, 8, 5, 7}, rng), dt = oracle::random_tensor({2, 8, 5, 7}, rng),
                 ds = oracle::random_tensor({2, 8, 5, 7}, rng);
    o.require(m.forward(leaf(dr), leaf(dt), leaf(ds)).out.value() == ds, "mdam identity " + to_string(mode));
  }
}

void criterion_losses(Outcome& o) {
  std::mt19937_64 rng(404);
  const Tensor g = oracle::random_mask({2, 1, 16, 16}, rng);
  const Var gv = leaf(g);
  const double total = total_loss_from_maps({gv, gv, gv, gv}, g, LossMode::kHybrid).value()[0];
  const double bce = ops::weighted_bce(leaf(Tensor(g.shape(), 0.5)), g, pixel_weights(g)).value()[0];
  const double iou = ops::weighted_iou(gv, g, pixel_weights(g)).value()[0];
  o.detail << "total(GT) " << fmt(total) << ", wBCE(0.5)-ln2 " << fmt(bce - std::log(2.0)) << ", wIoU(G,G) " << fmt(iou);
  o.require(total >= 0.0 && total <= 4e-6, "total loss on GT");
  o.require(std::abs(bce - std::log(2.0)) <= 1e-12, "wBCE of uniform 0.5");
  o.require(iou == 0.0, "wIoU(G,G)");
}

void criterion_metrics(Outcome& o) {
  namespace m = metrics;
  std::mt19937_64 rng(505);
  Worst w;
  for (int trial = 0; trial < 60; ++trial) {
    Tensor g = oracle::random_mask({1, 1, 8, 8}, rng, 0.35);
    if (trial == 0) g.fill(0.0);
    if (trial == 1) g.fill(1.0);
    const Tensor s = oracle::random_tensor({1, 1, 8, 8}, rng, 0, 1);
    const m::ImageMetrics r = m::evaluate_image(s, g);
    w.see(std::abs(r.mae - oracle::mae(s, g)), "mae");
    w.see(std::abs(r.fbeta_mean - oracle::f_mean(s, g)), "mean F");
    w.see(std::abs(r.fbeta_weighted - oracle::f_weighted(s, g)), "weighted F");
    w.see(std::abs(r.sm - oracle::s_measure(s, g)), "S");
    w.see(std::abs(r.em_mean - oracle::e_mean(s, g)), "E");
  }
  o.detail << "max deviation " << fmt(w.value) << (w.where.empty() ? "" : " (" + w.where + ")");
  o.require(w.value <= 1e-6, "metric deviation above 1e-6");
  double off = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor g = oracle::random_mask({1, 1, 8, 8}, rng, 0.4);
    const m::ImageMetrics r = m::evaluate_image(g, g);
    off = std::max({off, 1.0 - r.sm, 1.0 - r.fbeta_mean, 1.0 - r.fbeta_weighted, 1.0 - r.em_mean, r.mae});
  }
  o.detail << "; perfect prediction off (1,1,1,1,0) by " << fmt(off);
  o.require(off <= 1e-6, "perfect prediction");
}

void criterion_overfit(Outcome& o) {
  ModelConfig cfg = synthetic::toy_config(64, 64);
  cfg.training.batch_size = 8;
  cfg.training.epochs = 200;
  cfg.training.augment = false;
  const auto samples = synthetic::ellipses(8, 64, 7);
  const fs::path dir = synthetic::temp_dir("acceptance_overfit");
  TrainOptions opts;
  opts.deterministic = true;
  const TrainResult r = train_samples(cfg, samples, dir / "run", opts);
  const ContriNet model = load_model(r.checkpoint);
  const std::vector<Tensor> maps = predict_samples(model, samples);
  double mae = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) mae += metrics::mae(maps[i], samples[i].gt);
  mae /= static_cast<double>(samples.size());

  synthetic::write_dataset(dir / "data", samples);
  predict(r.checkpoint, dir / "data" / "RGB", dir / "data" / "T", dir / "pred");
  const metrics::MetricReport files = metrics::evaluate_dirs(dir / "pred", dir / "data" / "GT");
  o.detail << r.steps << " steps, final loss " << fmt(r.final_loss) << ", training-set MAE " << fmt(mae)
           << ", MAE of written maps " << fmt(files.aggregate.mae);
  o.require(r.steps <= 200, "more than 200 steps");
  o.require(mae < 0.05, "MAE not below 0.05");
  o.require(files.errors.empty() && files.aggregate.mae < 0.05, "written maps");
  fs::remove_all(dir);
}

void criterion_determinism(Outcome& o) {
  ModelConfig cfg = synthetic::toy_config(32, 8);
  cfg.training.batch_size = 2;
  cfg.training.epochs = 3;
  cfg.training.seed = 11;
  const auto samples = synthetic::ellipses(4, 32, 3);
  const fs::path dir = synthetic::temp_dir("acceptance_det");
  TrainOptions opts;
  opts.deterministic = true;
  const TrainResult a = train_samples(cfg, samples, dir / "a", opts);
  const TrainResult b = train_samples(cfg, samples, dir / "b", opts);
  o.require(read_bytes(a.checkpoint) == read_bytes(b.checkpoint), "checkpoints differ");
  o.require(read_bytes(dir / "a" / "train_log.jsonl") == read_bytes(dir / "b" / "train_log.jsonl"), "logs differ");

  TrainOptions first = opts;
  first.stop_at_step = 3;
  const TrainResult half = train_samples(cfg, samples, dir / "split", first);
  TrainOptions second = opts;
  second.resume_from = half.checkpoint;
  const TrainResult rest = train_samples(cfg, samples, dir / "split", second);
  o.require(read_bytes(a.checkpoint) == read_bytes(rest.checkpoint), "resumed checkpoint differs");
  o.require(read_bytes(dir / "a" / "train_log.jsonl") == read_bytes(dir / "split" / "train_log.jsonl"),
            "resumed loss log differs");
  o.detail << a.steps << " steps bitwise identical twice; stop at 3 + resume identical to uninterrupted run";
  fs::remove_all(dir);
}

double loss_on(const ContriNet& model, const Tensor& rgb, const Tensor& thermal, const Tensor& gt, Tensor* m_f) {
  NoGradGuard guard;
  const SaliencyBundle out = model.forward(Var::constant(rgb), Var::constant(thermal), {true, false});
  if (m_f) *m_f = out.m_f.value();
  return total_loss(out, gt, model.config().ablation.loss).value()[0];
}

void criterion_ablation(Outcome& o) {
  const ModelConfig base = synthetic::toy_config(32, 8);
  const auto variants = standard_variants();
  const auto configs = resolve_variants(base, variants);
  const auto samples = synthetic::ellipses(2, 32, 4);
  Tensor rgb, thermal, gt;
  stack_batch({&samples[0], &samples[1]}, rgb, thermal, gt);
  const ContriNet reference(base);
  Tensor ref_map;
  const double ref_loss = loss_on(reference, rgb, thermal, gt, &ref_map);
  int changed = 0;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (variants[i].name == "full") continue;
    ContriNet model(configs[i]);
    for (const auto& [key, entry] : model.params().entries()) {
      if (reference.params().contains(key) && reference.params().tensor(key).shape() == model.params().tensor(key).shape())
        model.params().tensor(key) = reference.params().tensor(key);
    }
    Tensor map;
    const double loss = loss_on(model, rgb, thermal, gt, &map);
    const bool differs = oracle::max_abs_diff(map, ref_map) > 1e-9 || std::abs(loss - ref_loss) > 1e-9;
    o.require(differs, variants[i].name + " leaves output unchanged");
    changed += differs;
  }
  o.detail << changed << "/" << variants.size() - 1 << " toggles change output";

  const fs::path dir = synthetic::temp_dir("acceptance_ablation");
  synthetic::write_dataset(dir / "data", samples);
  ModelConfig short_run = base;
  short_run.training.epochs = 1;
  short_run.training.batch_size = 2;
  AblationOptions opts;
  opts.out_dir = dir / "runs";
  const AblationReport report = run_ablation(short_run, variants, dir / "data", opts);
  std::set<std::string> names, signatures;
  for (const AblationRow& row : report.rows) {
    names.insert(row.name);
    std::ostringstream sig;
    sig.precision(17);
    sig << row.complexity.params << ' ' << row.complexity.macs << ' ' << row.final_loss << ' ' << row.metrics.mae << ' '
        << row.metrics.sm;
    signatures.insert(sig.str());
    o.require(row.name == "full" || !row.changed.empty(), row.name + " row lists no changed field");
    o.require(row.images == 2, row.name + " evaluated images");
  }
  o.require(report.rows.size() == variants.size() && names.size() == variants.size(), "row per variant");
  o.require(signatures.size() == variants.size(), "rows not distinct");
  o.detail << "; " << report.rows.size() << " report rows, " << signatures.size() << " distinct";
  fs::remove_all(dir);

  for (const ModelConfig& profile : {base, validate_config(nlohmann::json::object())}) {
    const ModelConfig x1 = apply_delta(profile, {{"ablation", {{"active_flows", {"complementary"}}, {"mdam_mode", "none"}}}});
    const std::int64_t p3 = count_complexity(profile).params, p1 = count_complexity(x1).params;
    o.detail << "; params x3 " << p3 << " > x1 " << p1;
    o.require(p3 > p1, "flows x3 not larger than x1");
  }
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no limit
  std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "oracles", 30, criterion_oracles},
      {2, "gradcheck", 120, criterion_gradcheck},
      {3, "invariants", 0, criterion_invariants},
      {4, "loss sanity", 0, criterion_losses},
      {5, "metrics", 0, criterion_metrics},
      {6, "overfit", 300, criterion_overfit},
      {7, "determinism", 0, criterion_determinism},
      {8, "ablation toggles", 0, criterion_ablation},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) o.require(false, "over " + fmt(c.budget_s) + " s budget");
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail.str() << " ("
              << fmt(secs) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
