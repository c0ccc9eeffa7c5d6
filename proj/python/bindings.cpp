#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "contrinet/errors.hpp"
#include "contrinet/gradcheck.hpp"
#include "contrinet/heads.hpp"
#include "contrinet/inference.hpp"
#include "contrinet/metrics.hpp"
#include "contrinet/model.hpp"
#include "contrinet/ops.hpp"
#include "contrinet/training.hpp"

namespace py = pybind11;
using namespace contrinet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape s{1, 1, 1, 1};
  const auto nd = a.ndim();
  if (nd < 2 || nd > 4) throw std::invalid_argument("expected a 2-D, 3-D or 4-D array");
  for (py::ssize_t i = 0; i < nd; ++i) s[4 - nd + i] = static_cast<int>(a.shape(i));
  return Tensor(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.n(), t.c(), t.h(), t.w()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

// Metrics take a single map; accept (H, W) or any shape with unit leading dims.
Tensor to_map(const Array& a) {
  Tensor t = to_tensor(a);
  if (t.n() != 1 || t.c() != 1) throw std::invalid_argument("expected a single map");
  return t;
}

LossMode loss_mode(const std::string& name) {
  if (name == "hybrid") return LossMode::kHybrid;
  if (name == "wbce") return LossMode::kWbceOnly;
  if (name == "wiou") return LossMode::kWiouOnly;
  throw ConfigError("loss must be one of hybrid, wbce, wiou");
}

py::dict metrics_dict(const metrics::ImageMetrics& m) {
  py::dict d;
  d["sm"] = m.sm;
  d["fbeta_mean"] = m.fbeta_mean;
  d["fbeta_weighted"] = m.fbeta_weighted;
  d["em_mean"] = m.em_mean;
  d["mae"] = m.mae;
  return d;
}

py::dict forward(const ContriNet& model, const Array& rgb, const Array& thermal) {
  const Tensor r = to_tensor(rgb);
  const Tensor t = to_tensor(thermal);
  SaliencyBundle b;
  {
    py::gil_scoped_release release;
    NoGradGuard no_grad;
    b = model.forward(Var::constant(r), Var::constant(t), ForwardOptions{});
  }
  static const char* names[] = {"rgb", "thermal", "complementary"};
  py::dict out;
  for (Flow f : model.config().ablation.active_flows) out[names[static_cast<int>(f)]] = to_array(b.map_of(f).value());
  out["fused"] = to_array(b.m_f.value());
  return out;
}

}  // namespace

PYBIND11_MODULE(_contrinet, m) {
  m.doc() = "RGB-thermal salient object detection core";

  auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  (void)config_error;

  m.def("validate_config", [](const std::string& doc) { return to_json(validate_config(nlohmann::json::parse(doc))).dump(); },
        py::arg("config_json"));
  m.def(
      "count_complexity",
      [](const std::string& doc) {
        const Complexity c = count_complexity(validate_config(nlohmann::json::parse(doc)));
        return std::make_pair(c.params, c.macs);
      },
      py::arg("config_json"));

  py::class_<ContriNet>(m, "Model")
      .def(py::init([](const std::string& doc) { return ContriNet(validate_config(nlohmann::json::parse(doc))); }),
           py::arg("config_json"))
      .def_static("load", [](const std::filesystem::path& ckpt) { return load_model(ckpt); }, py::arg("checkpoint"))
      .def("forward", &forward, py::arg("rgb"), py::arg("thermal"),
           "Inference-mode maps for [N, 3, S, S] inputs, keyed by flow plus 'fused'.")
      .def_property_readonly("config_json", [](const ContriNet& net) { return to_json(net.config()).dump(); })
      .def_property_readonly("param_count", [](const ContriNet& net) { return net.params().trainable_count(); })
      .def("save_params", [](const ContriNet& net, const std::filesystem::path& p) { save_params(net.params(), p); });

  m.def("pixel_weights", [](const Array& gt) { return to_array(pixel_weights(to_tensor(gt))); }, py::arg("gt"));
  m.def(
      "weighted_bce",
      [](const Array& probs, const Array& gt) {
        const Tensor g = to_tensor(gt);
        return ops::weighted_bce(Var::constant(to_tensor(probs)), g, pixel_weights(g)).value()[0];
      },
      py::arg("probs"), py::arg("gt"));
  m.def(
      "weighted_iou",
      [](const Array& probs, const Array& gt) {
        const Tensor g = to_tensor(gt);
        return ops::weighted_iou(Var::constant(to_tensor(probs)), g, pixel_weights(g)).value()[0];
      },
      py::arg("probs"), py::arg("gt"));
  m.def(
      "total_loss",
      [](const std::vector<Array>& maps, const Array& gt, const std::string& mode) {
        std::vector<Var> vars;
        for (const Array& a : maps) vars.push_back(Var::constant(to_tensor(a)));
        return total_loss_from_maps(vars, to_tensor(gt), loss_mode(mode)).value()[0];
      },
      py::arg("maps"), py::arg("gt"), py::arg("loss") = "hybrid");

  m.def("mae", [](const Array& s, const Array& g) { return metrics::mae(to_map(s), to_map(g)); });
  m.def("s_measure", [](const Array& s, const Array& g) { return metrics::s_measure(to_map(s), to_map(g)); });
  m.def("f_measure_mean", [](const Array& s, const Array& g) { return metrics::f_measure_mean(to_map(s), to_map(g)); });
  m.def("f_measure_weighted",
        [](const Array& s, const Array& g) { return metrics::f_measure_weighted(to_map(s), to_map(g)); });
  m.def("e_measure_mean", [](const Array& s, const Array& g) { return metrics::e_measure_mean(to_map(s), to_map(g)); });
  m.def("evaluate_image", [](const Array& s, const Array& g) { return metrics_dict(metrics::evaluate_image(to_map(s), to_map(g))); });
  m.def(
      "evaluate_dirs",
      [](const std::filesystem::path& pred, const std::filesystem::path& gt,
         const std::optional<std::filesystem::path>& attributes) {
        return metrics::evaluate_dirs(pred, gt, attributes).to_json().dump();
      },
      py::arg("pred_dir"), py::arg("gt_dir"), py::arg("attributes") = std::nullopt);

  m.def(
      "train",
      [](const std::string& doc, const std::filesystem::path& root, const std::filesystem::path& out,
         bool deterministic) {
        TrainOptions opts;
        opts.deterministic = deterministic;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(validate_config(nlohmann::json::parse(doc)), root, out, opts);
        }
        return py::make_tuple(r.steps, r.final_loss, r.checkpoint);
      },
      py::arg("config_json"), py::arg("data_root"), py::arg("out_dir"), py::arg("deterministic") = true);
  m.def(
      "predict",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& rgb, const std::filesystem::path& thermal,
         const std::filesystem::path& out, bool flows) {
        PredictOptions opts;
        opts.flows = flows;
        return predict(ckpt, rgb, thermal, out, opts);
      },
      py::arg("checkpoint"), py::arg("rgb"), py::arg("thermal"), py::arg("out_dir"), py::arg("flows") = false);
  m.def(
      "gradcheck",
      [](const std::string& module, std::uint64_t seed) {
        GradcheckOptions opts;
        opts.seed = seed;
        return gradcheck(module, opts).to_json().dump();
      },
      py::arg("module"), py::arg("seed") = 0);
}
