#include "contrinet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "contrinet/errors.hpp"
#include "contrinet/image_io.hpp"

namespace contrinet::metrics {
namespace {

void check_pair(const Tensor& s, const Tensor& g, const char* what) {
  if (s.n() != 1 || s.c() != 1) throw std::invalid_argument(std::string(what) + ": expected [1, 1, H, W] maps");
  require_same_shape(s.shape(), g.shape(), what);
}

std::size_t foreground_count(const Tensor& g) {
  std::size_t n = 0;
  for (double v : g.values()) n += v > 0.5;
  return n;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

// Object-level similarity of the values of `pred` on `mask`.
double object_similarity(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double x = mean_of(values);
  double var = 0.0;
  for (double v : values) var += (v - x) * (v - x);
  const double sigma = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double ssim(const std::vector<double>& p, const std::vector<double>& q) {
  const double n = static_cast<double>(p.size());
  if (p.empty()) return 0.0;
  const double x = mean_of(p), y = mean_of(q);
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sx += (p[i] - x) * (p[i] - x);
    sy += (q[i] - y) * (q[i] - y);
    sxy += (p[i] - x) * (q[i] - y);
  }
  sx /= n - 1.0 + kEps;
  sy /= n - 1.0 + kEps;
  sxy /= n - 1.0 + kEps;
  const double a = 4.0 * x * y * sxy;
  const double b = (x * x + y * y) * (sx + sy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double region_similarity(const Tensor& s, const Tensor& g) {
  const int h = g.h(), w = g.w();
  double sum = 0.0, sum_x = 0.0, sum_y = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = g.at(0, 0, y, x);
      sum += v;
      sum_x += v * (x + 1);
      sum_y += v * (y + 1);
    }
  // 1-based centroid, rounded half away from zero.
  const int cx = static_cast<int>(std::round(sum_x / sum));
  const int cy = static_cast<int>(std::round(sum_y / sum));
  const double area = static_cast<double>(h) * w;
  const std::array<std::array<int, 4>, 4> boxes{{{0, cy, 0, cx}, {0, cy, cx, w}, {cy, h, 0, cx}, {cy, h, cx, w}}};
  double q = 0.0;
  for (const auto& [y0, y1, x0, x1] : boxes) {
    std::vector<double> ps, gs;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        ps.push_back(s.at(0, 0, y, x));
        gs.push_back(g.at(0, 0, y, x));
      }
    q += static_cast<double>(ps.size()) / area * ssim(ps, gs);
  }
  return q;
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), returning for each
// x the minimising site. Sites with infinite cost are skipped; ties resolve to
// the smallest site.
void envelope_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& arg) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -std::numeric_limits<double>::infinity();
      z[1] = std::numeric_limits<double>::infinity();
      continue;
    }
    double s = 0.0;
    while (true) {
      s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      v[k] = q;  // only possible for k == 0: the new site dominates everywhere
      z[k + 1] = std::numeric_limits<double>::infinity();
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  d.assign(n, std::numeric_limits<double>::infinity());
  arg.assign(n, -1);
  if (k < 0) return;
  int j = 0;
  for (int x = 0; x < n; ++x) {
    while (z[j + 1] < x) ++j;
    d[x] = static_cast<double>(x - v[j]) * (x - v[j]) + f[v[j]];
    arg[x] = v[j];
  }
}

}  // namespace

std::vector<std::uint8_t> quantize(const Tensor& s) {
  std::vector<std::uint8_t> q(s.numel());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s[i], 0.0, 1.0) * 255.0));
  }
  return q;
}

double mae(const Tensor& s, const Tensor& g) {
  check_pair(s, g, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.numel(); ++i) acc += std::abs(s[i] - g[i]);
  return acc / static_cast<double>(s.numel());
}

std::vector<double> f_measure_curve(const Tensor& s, const Tensor& g, double beta2) {
  check_pair(s, g, "f_measure");
  const std::vector<std::uint8_t> q = quantize(s);
  // Histograms of quantised values over foreground and background.
  std::array<double, 256> fg{}, bg{};
  for (std::size_t i = 0; i < q.size(); ++i) (g[i] > 0.5 ? fg : bg)[q[i]] += 1.0;
  const double positives = foreground_count(g);
  std::vector<double> curve(kThresholds);
  double tp = 0.0, fp = 0.0;
  // Walk thresholds downward so tp/fp accumulate the levels above tau.
  for (int tau = 255; tau-- > 0;) {
    tp += fg[tau + 1];
    fp += bg[tau + 1];
    if (positives == 0.0) {
      curve[tau] = (tp + fp) == 0.0 ? 1.0 : 0.0;
      continue;
    }
    const double precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    const double recall = tp / positives;
    const double denom = beta2 * precision + recall;
    curve[tau] = denom > 0.0 ? (1.0 + beta2) * precision * recall / denom : 0.0;
  }
  return curve;
}

double f_measure_mean(const Tensor& s, const Tensor& g, double beta2) { return mean_of(f_measure_curve(s, g, beta2)); }

void nearest_foreground(const Tensor& g, std::vector<double>& dist, std::vector<std::size_t>& index) {
  const int h = g.h(), w = g.w();
  const double inf = std::numeric_limits<double>::infinity();
  // Column pass: nearest foreground row within each column.
  std::vector<double> col_d2(static_cast<std::size_t>(h) * w, inf);
  std::vector<int> col_row(static_cast<std::size_t>(h) * w, -1);
  for (int x = 0; x < w; ++x) {
    std::vector<double> f(h);
    for (int y = 0; y < h; ++y) f[y] = g.at(0, 0, y, x) > 0.5 ? 0.0 : inf;
    std::vector<double> d;
    std::vector<int> arg;
    envelope_1d(f, d, arg);
    for (int y = 0; y < h; ++y) {
      col_d2[static_cast<std::size_t>(y) * w + x] = d[y];
      col_row[static_cast<std::size_t>(y) * w + x] = arg[y];
    }
  }
  dist.assign(static_cast<std::size_t>(h) * w, inf);
  index.assign(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    std::vector<double> f(col_d2.begin() + static_cast<std::ptrdiff_t>(y) * w,
                          col_d2.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
    std::vector<double> d;
    std::vector<int> arg;
    envelope_1d(f, d, arg);
    for (int x = 0; x < w; ++x) {
      const std::size_t o = static_cast<std::size_t>(y) * w + x;
      if (arg[x] < 0) continue;
      dist[o] = std::sqrt(d[x]);
      index[o] = static_cast<std::size_t>(col_row[static_cast<std::size_t>(y) * w + arg[x]]) * w + arg[x];
    }
  }
}

double f_measure_weighted(const Tensor& s, const Tensor& g, double beta2) {
  check_pair(s, g, "f_measure_weighted");
  const int h = g.h(), w = g.w();
  const std::size_t n = g.numel();
  if (foreground_count(g) == 0) {
    const auto q = quantize(s);
    return std::all_of(q.begin(), q.end(), [](std::uint8_t v) { return v == 0; }) ? 1.0 : 0.0;
  }
  std::vector<double> dist;
  std::vector<std::size_t> nearest;
  nearest_foreground(g, dist, nearest);

  std::vector<double> e(n), et(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = std::abs(s[i] - g[i]);
  for (std::size_t i = 0; i < n; ++i) et[i] = g[i] > 0.5 ? e[i] : e[nearest[i]];

  // 7x7 Gaussian, sigma 5, normalised; separable with zero padding.
  std::array<double, 7> k{};
  double ksum = 0.0;
  for (int i = 0; i < 7; ++i) ksum += (k[i] = std::exp(-static_cast<double>((i - 3) * (i - 3)) / 50.0));
  for (double& v : k) v /= ksum;
  std::vector<double> tmp(n, 0.0), ea(n, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -3; i <= 3; ++i) {
        const int xx = x + i;
        if (xx >= 0 && xx < w) acc += k[i + 3] * et[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -3; i <= 3; ++i) {
        const int yy = y + i;
        if (yy >= 0 && yy < h) acc += k[i + 3] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      ea[static_cast<std::size_t>(y) * w + x] = acc;
    }

  double tpw = 0.0, fpw = 0.0, ew_fg = 0.0, fg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = g[i] > 0.5;
    const double min_e = (pos && ea[i] < e[i]) ? ea[i] : e[i];
    const double b = pos ? 1.0 : 2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]);
    const double ew = min_e * b;
    if (pos) {
      ew_fg += ew;
      fg += 1.0;
    } else {
      fpw += ew;
    }
  }
  tpw = fg - ew_fg;
  const double recall = 1.0 - ew_fg / fg;
  const double precision = tpw / (kEps + tpw + fpw);
  return (1.0 + beta2) * recall * precision / (kEps + recall + beta2 * precision);
}

double s_measure(const Tensor& s, const Tensor& g, double alpha) {
  check_pair(s, g, "s_measure");
  const std::size_t n = g.numel();
  const double y = static_cast<double>(foreground_count(g)) / static_cast<double>(n);
  double mean_s = 0.0;
  for (double v : s.values()) mean_s += v;
  mean_s /= static_cast<double>(n);
  if (y == 0.0) return 1.0 - mean_s;
  if (y == 1.0) return mean_s;
  std::vector<double> fg_vals, bg_vals;
  for (std::size_t i = 0; i < n; ++i) {
    if (g[i] > 0.5) {
      fg_vals.push_back(s[i]);
    } else {
      bg_vals.push_back(1.0 - s[i]);
    }
  }
  const double object = y * object_similarity(fg_vals) + (1.0 - y) * object_similarity(bg_vals);
  const double q = alpha * object + (1.0 - alpha) * region_similarity(s, g);
  return std::max(q, 0.0);
}

double e_measure_binary(const std::vector<std::uint8_t>& fm, const Tensor& g) {
  const std::size_t n = g.numel();
  const double fg = static_cast<double>(foreground_count(g));
  double pred_sum = 0.0;
  for (std::uint8_t v : fm) pred_sum += v;
  if (fg == 0.0) return 1.0 - pred_sum / static_cast<double>(n);
  if (fg == static_cast<double>(n)) return pred_sum / static_cast<double>(n);
  const double mu_fm = pred_sum / static_cast<double>(n);
  const double mu_gt = fg / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = fm[i] - mu_fm;
    const double b = g[i] - mu_gt;
    const double align = 2.0 * a * b / (a * a + b * b + kEps);
    acc += (align + 1.0) * (align + 1.0) / 4.0;
  }
  return acc / static_cast<double>(n);
}

double e_measure_mean(const Tensor& s, const Tensor& g) {
  check_pair(s, g, "e_measure");
  const std::vector<std::uint8_t> q = quantize(s);
  std::vector<std::uint8_t> fm(q.size());
  double total = 0.0;
  for (int tau = 0; tau < kThresholds; ++tau) {
    for (std::size_t i = 0; i < q.size(); ++i) fm[i] = q[i] > tau;
    total += e_measure_binary(fm, g);
  }
  return total / kThresholds;
}

ImageMetrics evaluate_image(const Tensor& s, const Tensor& g) {
  ImageMetrics m;
  m.sm = s_measure(s, g);
  m.fbeta_mean = f_measure_mean(s, g);
  m.fbeta_weighted = f_measure_weighted(s, g);
  m.em_mean = e_measure_mean(s, g);
  m.mae = mae(s, g);
  return m;
}

namespace {

nlohmann::json metrics_json(const ImageMetrics& m) {
  return {{"sm", m.sm}, {"fbeta_mean", m.fbeta_mean}, {"fbeta_weighted", m.fbeta_weighted}, {"em_mean", m.em_mean},
          {"mae", m.mae}};
}

ImageMetrics average(const std::vector<const ImageMetrics*>& items) {
  ImageMetrics out;
  if (items.empty()) return out;
  for (const ImageMetrics* m : items) {
    out.sm += m->sm;
    out.fbeta_mean += m->fbeta_mean;
    out.fbeta_weighted += m->fbeta_weighted;
    out.em_mean += m->em_mean;
    out.mae += m->mae;
  }
  const double n = static_cast<double>(items.size());
  out.sm /= n;
  out.fbeta_mean /= n;
  out.fbeta_weighted /= n;
  out.em_mean /= n;
  out.mae /= n;
  return out;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const ImageRecord& r : images) {
    nlohmann::json rec = metrics_json(r.metrics);
    rec["name"] = r.name;
    if (!r.attributes.empty()) rec["attributes"] = r.attributes;
    j["images"].push_back(rec);
  }
  j["aggregate"] = metrics_json(aggregate);
  j["aggregate"]["count"] = images.size();
  j["attributes"] = nlohmann::json::object();
  for (const auto& [attr, m] : by_attribute) {
    j["attributes"][attr] = metrics_json(m);
    j["attributes"][attr]["count"] = attribute_counts.at(attr);
  }
  j["errors"] = errors;
  return j;
}

MetricReport summarize(std::vector<ImageRecord> records, std::vector<std::string> errors) {
  MetricReport report;
  report.images = std::move(records);
  report.errors = std::move(errors);
  std::vector<const ImageMetrics*> all;
  std::map<std::string, std::vector<const ImageMetrics*>> slices;
  for (const ImageRecord& r : report.images) {
    all.push_back(&r.metrics);
    for (const std::string& a : r.attributes) slices[a].push_back(&r.metrics);
  }
  report.aggregate = average(all);
  for (const auto& [attr, items] : slices) {
    report.by_attribute[attr] = average(items);
    report.attribute_counts[attr] = static_cast<int>(items.size());
  }
  return report;
}

std::map<std::string, std::vector<std::string>> load_attributes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attribute file " + path.string());
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError("attribute file " + path.string() + " line " + std::to_string(line_no) + ": missing ','");
    }
    const std::string stem = std::filesystem::path(line.substr(0, comma)).stem().string();
    std::vector<std::string> tags;
    std::stringstream ss(line.substr(comma + 1));
    std::string tag;
    while (std::getline(ss, tag, ';')) {
      if (!tag.empty()) tags.push_back(tag);
    }
    out[stem] = std::move(tags);
  }
  return out;
}

MetricReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                           const std::optional<std::filesystem::path>& attributes) {
  const auto preds = list_images(pred_dir);
  const auto gts = list_images(gt_dir);
  std::map<std::string, std::vector<std::string>> attrs;
  if (attributes) attrs = load_attributes(*attributes);

  std::vector<ImageRecord> records;
  std::vector<std::string> errors;
  for (const auto& [stem, pred_path] : preds) {
    auto it = gts.find(stem);
    if (it == gts.end()) {
      errors.push_back("unmatched prediction '" + stem + "'");
      continue;
    }
    try {
      const Tensor s = read_gray(pred_path);
      const Tensor g = read_mask(it->second);
      if (s.shape() != g.shape()) {
        errors.push_back("size mismatch for '" + stem + "': prediction " + std::to_string(s.h()) + "x" +
                         std::to_string(s.w()) + ", ground truth " + std::to_string(g.h()) + "x" +
                         std::to_string(g.w()));
        continue;
      }
      ImageRecord rec{stem, evaluate_image(s, g), {}};
      if (auto a = attrs.find(stem); a != attrs.end()) rec.attributes = a->second;
      records.push_back(std::move(rec));
    } catch (const DataError& e) {
      errors.push_back(e.what());
    }
  }
  for (const auto& [stem, _] : gts) {
    if (!preds.count(stem)) errors.push_back("unmatched ground truth '" + stem + "'");
  }
  if (records.empty()) throw DataError("no prediction/ground-truth pairs could be evaluated");
  return summarize(std::move(records), std::move(errors));
}

}  // namespace contrinet::metrics
