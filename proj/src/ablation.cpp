#include "contrinet/ablation.hpp"

#include <fstream>
#include <set>

#include "contrinet/errors.hpp"
#include "contrinet/inference.hpp"
#include "contrinet/training.hpp"

namespace contrinet {
namespace {

nlohmann::json metrics_json(const metrics::ImageMetrics& m) {
  return {{"sm", m.sm}, {"fbeta_mean", m.fbeta_mean}, {"fbeta_weighted", m.fbeta_weighted},
          {"em_mean", m.em_mean}, {"mae", m.mae}};
}

AblationVariant parse_entry(const nlohmann::json& e) {
  if (!e.is_object() || !e.contains("name") || !e["name"].is_string()) {
    throw ConfigError("each ablation variant needs a string 'name'");
  }
  AblationVariant v{e["name"].get<std::string>()};
  if (e.contains("delta")) v.delta = e["delta"];
  for (const auto& [key, _] : e.items()) {
    if (key != "name" && key != "delta") throw ConfigError("unknown key '" + key + "' in variant '" + v.name + "'");
  }
  return v;
}

}  // namespace

std::vector<AblationVariant> parse_variants(const nlohmann::json& doc) {
  std::vector<AblationVariant> out;
  if (doc.is_array()) {
    for (const auto& e : doc) out.push_back(parse_entry(e));
  } else if (doc.is_object() && doc.contains("variants")) {
    if (doc.size() != 1 || !doc["variants"].is_array()) throw ConfigError("'variants' must be the only key and a list");
    return parse_variants(doc["variants"]);
  } else if (doc.is_object()) {
    for (const auto& [name, delta] : doc.items()) out.push_back({name, delta});
  } else {
    throw ConfigError("ablation variants must be a list or an object");
  }
  if (out.empty()) throw ConfigError("ablation variant list is empty");
  std::set<std::string> seen;
  for (const auto& v : out) {
    if (v.name.empty()) throw ConfigError("ablation variant name must not be empty");
    if (!seen.insert(v.name).second) throw ConfigError("duplicate ablation variant '" + v.name + "'");
    if (!v.delta.is_object()) throw ConfigError("delta of variant '" + v.name + "' must be an object");
  }
  return out;
}

std::vector<AblationVariant> load_variants(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open variants file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("variants file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_variants(doc);
}

std::vector<AblationVariant> standard_variants() {
  using nlohmann::json;
  auto abl = [](json body) { return json{{"ablation", std::move(body)}}; };
  return {
      {"full", json::object()},
      {"mfm_no_cfe", abl({{"use_mfm_cfe", false}})},
      {"mfm_no_aff", abl({{"use_mfm_aff", false}})},
      {"raspm_no_atrous", abl({{"use_raspm_atrous", false}})},
      {"decoder_plain", abl({{"decoder_block", "plain"}})},
      {"decoder_ppm", abl({{"decoder_block", "ppm"}})},
      {"decoder_aspp", abl({{"decoder_block", "aspp"}})},
      {"mdam_no_dw", abl({{"mdam_mode", "fixed_weights"}})},
      {"mdam_no_doe", abl({{"mdam_mode", "no_doe"}})},
      {"mdam_none", abl({{"mdam_mode", "none"}})},
      {"flows_x1", abl({{"active_flows", {"complementary"}}, {"mdam_mode", "none"}})},
      {"flows_x2", abl({{"active_flows", {"rgb", "thermal"}}})},
      {"dual_encoder", abl({{"shared_encoder", false}})},
      {"loss_wbce", abl({{"loss", "wbce"}})},
      {"loss_wiou", abl({{"loss", "wiou"}})},
  };
}

std::vector<ModelConfig> resolve_variants(const ModelConfig& base, const std::vector<AblationVariant>& variants) {
  if (variants.empty()) throw ConfigError("ablation variant list is empty");
  std::vector<ModelConfig> out;
  for (const auto& v : variants) {
    try {
      out.push_back(apply_delta(base, v.delta));
    } catch (const ConfigError& e) {
      throw ConfigError("variant '" + v.name + "': " + e.what());
    }
  }
  return out;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"name", r.name},
                   {"delta", r.delta},
                   {"changed", r.changed},
                   {"params", r.complexity.params},
                   {"macs", r.complexity.macs},
                   {"final_loss", r.final_loss},
                   {"images", r.images},
                   {"metrics", metrics_json(r.metrics)}});
  }
  return {{"rows", out}};
}

AblationReport run_ablation(const ModelConfig& base, const std::vector<AblationVariant>& variants,
                            const std::filesystem::path& data_root, const AblationOptions& opts) {
  const std::vector<ModelConfig> configs = resolve_variants(base, variants);
  const DatasetIndex train_index = load_dataset(data_root);
  const DatasetIndex eval_index = opts.eval_root ? load_dataset(*opts.eval_root) : train_index;

  AblationReport report;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    TrainOptions to;
    to.deterministic = opts.deterministic;
    const TrainResult trained = train(configs[i], data_root, opts.out_dir / variants[i].name, to);
    const ContriNet model = load_model(trained.checkpoint);
    const metrics::MetricReport m = evaluate_model(model, eval_index);
    report.rows.push_back({variants[i].name, variants[i].delta, config_differences(base, configs[i]),
                           count_complexity(configs[i]), trained.final_loss, m.aggregate,
                           static_cast<int>(m.images.size())});
  }
  return report;
}

}  // namespace contrinet
