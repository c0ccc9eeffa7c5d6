#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "contrinet/ops.hpp"

namespace contrinet::ops {
namespace {

void check_loss_inputs(const Var& pred, const Tensor& target, const Tensor& weight, const char* what) {
  require_same_shape(pred.shape(), target.shape(), what);
  require_same_shape(pred.shape(), weight.shape(), what);
  if (pred.shape()[1] != 1) throw std::invalid_argument(std::string(what) + ": expected single-channel maps");
  for (double g : target.values()) {
    if (g != 0.0 && g != 1.0) throw std::invalid_argument(std::string(what) + ": target must be binary");
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::size_t image_size(const Shape& s) { return static_cast<std::size_t>(s[2]) * s[3]; }

// Shared weighted-IoU kernel; probs are sigmoid(logits) or raw probabilities.
// d(loss)/d(prob) for every pixel is written to dprob.
double weighted_iou_value(std::span<const double> probs, const Tensor& target, const Tensor& weight, int batch,
                          std::vector<double>* dprob) {
  const std::size_t per = probs.size() / batch;
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    double inter = 0.0, uni = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      const double p = probs[i], g = target[i], w = weight[i];
      inter += w * p * g;
      uni += w * (p + g - p * g);
    }
    total += 1.0 - (inter + 1.0) / (uni + 1.0);
    if (dprob != nullptr) {
      const double denom = (uni + 1.0) * (uni + 1.0);
      for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
        const double g = target[i], w = weight[i];
        (*dprob)[i] = -(w * g * (uni + 1.0) - (inter + 1.0) * w * (1.0 - g)) / denom / batch;
      }
    }
  }
  return total / batch;
}

}  // namespace

Var weighted_bce_with_logits(const Var& logits, const Tensor& target, const Tensor& weight) {
  check_loss_inputs(logits, target, weight, "weighted_bce_with_logits");
  const int batch = logits.shape()[0];
  const std::size_t per = image_size(logits.shape());
  const Tensor& x = logits.value();
  std::vector<double> mass(batch, 0.0);
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    double acc = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      acc += weight[i] * (softplus(x[i]) - target[i] * x[i]);
      mass[n] += weight[i];
    }
    total += acc / mass[n];
  }
  return make_result(Tensor({1, 1, 1, 1}, total / batch), {logits},
                     [logits, target, weight, mass, batch, per](const Node& self) {
                       Tensor& gx = logits.node()->grad_buffer();
                       const double g = self.grad[0];
                       for (int n = 0; n < batch; ++n)
                         for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
                           gx[i] += g * weight[i] * (sigmoid(logits.value()[i]) - target[i]) / mass[n] / batch;
                         }
                     });
}

Var weighted_iou_with_logits(const Var& logits, const Tensor& target, const Tensor& weight) {
  check_loss_inputs(logits, target, weight, "weighted_iou_with_logits");
  const int batch = logits.shape()[0];
  std::vector<double> probs(logits.value().numel());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = sigmoid(logits.value()[i]);
  std::vector<double> dprob(probs.size());
  const double value = weighted_iou_value(probs, target, weight, batch, &dprob);
  return make_result(Tensor({1, 1, 1, 1}, value), {logits},
                     [logits, probs = std::move(probs), dprob = std::move(dprob)](const Node& self) {
                       Tensor& gx = logits.node()->grad_buffer();
                       for (std::size_t i = 0; i < probs.size(); ++i) {
                         gx[i] += self.grad[0] * dprob[i] * probs[i] * (1.0 - probs[i]);
                       }
                     });
}

Var weighted_bce(const Var& probs, const Tensor& target, const Tensor& weight, double eps) {
  check_loss_inputs(probs, target, weight, "weighted_bce");
  const int batch = probs.shape()[0];
  const std::size_t per = image_size(probs.shape());
  const Tensor& m = probs.value();
  std::vector<double> mass(batch, 0.0);
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    double acc = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      const double p = std::clamp(m[i], eps, 1.0 - eps);
      acc += weight[i] * (-target[i] * std::log(p) - (1.0 - target[i]) * std::log(1.0 - p));
      mass[n] += weight[i];
    }
    total += acc / mass[n];
  }
  return make_result(Tensor({1, 1, 1, 1}, total / batch), {probs},
                     [probs, target, weight, mass, batch, per, eps](const Node& self) {
                       Tensor& gm = probs.node()->grad_buffer();
                       const double g = self.grad[0];
                       for (int n = 0; n < batch; ++n)
                         for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
                           const double raw = probs.value()[i];
                           if (raw < eps || raw > 1.0 - eps) continue;
                           const double d = -target[i] / raw + (1.0 - target[i]) / (1.0 - raw);
                           gm[i] += g * weight[i] * d / mass[n] / batch;
                         }
                     });
}

Var weighted_iou(const Var& probs, const Tensor& target, const Tensor& weight) {
  check_loss_inputs(probs, target, weight, "weighted_iou");
  const int batch = probs.shape()[0];
  std::vector<double> dprob(probs.value().numel());
  const double value = weighted_iou_value(probs.value().storage(), target, weight, batch, &dprob);
  return make_result(Tensor({1, 1, 1, 1}, value), {probs}, [probs, dprob = std::move(dprob)](const Node& self) {
    Tensor& gm = probs.node()->grad_buffer();
    for (std::size_t i = 0; i < dprob.size(); ++i) gm[i] += self.grad[0] * dprob[i];
  });
}

}  // namespace contrinet::ops
