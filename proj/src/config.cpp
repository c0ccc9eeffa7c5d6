#include "contrinet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace contrinet {
namespace {

using nlohmann::json;

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<Backbone> kBackbones[] = {{Backbone::kToy, "toy"}, {Backbone::kRes2Net50, "res2net50"}};
constexpr EnumName<Flow> kFlows[] = {
    {Flow::kRgb, "rgb"}, {Flow::kThermal, "thermal"}, {Flow::kComplementary, "complementary"}};
constexpr EnumName<MdamMode> kMdamModes[] = {{MdamMode::kDynamic, "dynamic"},
                                             {MdamMode::kFixedWeights, "fixed_weights"},
                                             {MdamMode::kNoDoe, "no_doe"},
                                             {MdamMode::kNone, "none"}};
constexpr EnumName<DecoderBlock> kBlocks[] = {{DecoderBlock::kRaspm, "raspm"},
                                              {DecoderBlock::kPlain, "plain"},
                                              {DecoderBlock::kPpm, "ppm"},
                                              {DecoderBlock::kAspp, "aspp"}};
constexpr EnumName<LossMode> kLosses[] = {
    {LossMode::kHybrid, "hybrid"}, {LossMode::kWbceOnly, "wbce"}, {LossMode::kWiouOnly, "wiou"}};
constexpr EnumName<FusionMode> kFusions[] = {{FusionMode::kLogits, "logits"},
                                             {FusionMode::kProbabilities, "probabilities"}};
constexpr EnumName<Schedule> kSchedules[] = {{Schedule::kCosine, "cosine"}, {Schedule::kConstant, "constant"}};

template <typename Enum, std::size_t N>
const char* name_of(const EnumName<Enum> (&table)[N], Enum v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename Enum, std::size_t N>
Enum parse_enum(const EnumName<Enum> (&table)[N], const json& node, const std::string& field) {
  if (!node.is_string()) throw ConfigError("field '" + field + "' must be a string");
  const auto text = node.get<std::string>();
  std::string options;
  for (const auto& e : table) {
    if (text == e.name) return e.value;
    options += options.empty() ? e.name : std::string(", ") + e.name;
  }
  throw ConfigError("field '" + field + "' has unknown value '" + text + "' (expected one of: " + options + ")");
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& scope) {
  if (!obj.is_object()) throw ConfigError("'" + (scope.empty() ? std::string("config") : scope) + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown config key '" + (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

int read_int(const json& node, const std::string& field) {
  if (!node.is_number_integer()) throw ConfigError("field '" + field + "' must be an integer");
  return node.get<int>();
}

double read_double(const json& node, const std::string& field) {
  if (!node.is_number()) throw ConfigError("field '" + field + "' must be a number");
  return node.get<double>();
}

bool read_bool(const json& node, const std::string& field) {
  if (!node.is_boolean()) throw ConfigError("field '" + field + "' must be a boolean");
  return node.get<bool>();
}

void parse_ablation(const json& j, AblationConfig& a) {
  check_keys(j,
             {"use_mfm_cfe", "use_mfm_aff", "use_raspm_atrous", "mdam_mode", "active_flows", "decoder_block",
              "shared_encoder", "loss", "fusion"},
             "ablation");
  if (j.contains("use_mfm_cfe")) a.use_mfm_cfe = read_bool(j["use_mfm_cfe"], "ablation.use_mfm_cfe");
  if (j.contains("use_mfm_aff")) a.use_mfm_aff = read_bool(j["use_mfm_aff"], "ablation.use_mfm_aff");
  if (j.contains("use_raspm_atrous")) a.use_raspm_atrous = read_bool(j["use_raspm_atrous"], "ablation.use_raspm_atrous");
  if (j.contains("shared_encoder")) a.shared_encoder = read_bool(j["shared_encoder"], "ablation.shared_encoder");
  if (j.contains("mdam_mode")) a.mdam_mode = parse_enum(kMdamModes, j["mdam_mode"], "ablation.mdam_mode");
  if (j.contains("decoder_block")) a.decoder_block = parse_enum(kBlocks, j["decoder_block"], "ablation.decoder_block");
  if (j.contains("loss")) a.loss = parse_enum(kLosses, j["loss"], "ablation.loss");
  if (j.contains("fusion")) a.fusion = parse_enum(kFusions, j["fusion"], "ablation.fusion");
  if (j.contains("active_flows")) {
    const json& flows = j["active_flows"];
    if (!flows.is_array()) throw ConfigError("field 'ablation.active_flows' must be an array");
    a.active_flows.clear();
    for (const json& f : flows) a.active_flows.push_back(parse_enum(kFlows, f, "ablation.active_flows"));
  }
}

void parse_training(const json& j, TrainingConfig& t) {
  check_keys(j,
             {"lr", "batch_size", "epochs", "seed", "schedule", "augment", "flip_probability", "max_rotation_degrees",
              "max_crop_fraction", "checkpoint_every"},
             "training");
  if (j.contains("lr")) t.lr = read_double(j["lr"], "training.lr");
  if (j.contains("batch_size")) t.batch_size = read_int(j["batch_size"], "training.batch_size");
  if (j.contains("epochs")) t.epochs = read_int(j["epochs"], "training.epochs");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0) throw ConfigError("field 'training.seed' must be a non-negative integer");
    t.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("schedule")) t.schedule = parse_enum(kSchedules, j["schedule"], "training.schedule");
  if (j.contains("augment")) t.augment = read_bool(j["augment"], "training.augment");
  if (j.contains("flip_probability")) t.flip_probability = read_double(j["flip_probability"], "training.flip_probability");
  if (j.contains("max_rotation_degrees"))
    t.max_rotation_degrees = read_double(j["max_rotation_degrees"], "training.max_rotation_degrees");
  if (j.contains("max_crop_fraction"))
    t.max_crop_fraction = read_double(j["max_crop_fraction"], "training.max_crop_fraction");
  if (j.contains("checkpoint_every")) t.checkpoint_every = read_int(j["checkpoint_every"], "training.checkpoint_every");
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.emplace_back(prefix, j);
  }
}

}  // namespace

bool AblationConfig::has_flow(Flow f) const {
  return std::find(active_flows.begin(), active_flows.end(), f) != active_flows.end();
}

std::string to_string(Flow flow) { return name_of(kFlows, flow); }
std::string to_string(MdamMode mode) { return name_of(kMdamModes, mode); }
std::string to_string(DecoderBlock block) { return name_of(kBlocks, block); }

ModelConfig validate_config(const ModelConfig& in) {
  ModelConfig cfg = in;
  if (cfg.input_size <= 0 || cfg.input_size % 32 != 0) throw ConfigError("input_size must be divisible by 32");
  for (int c : cfg.encoder_channels) {
    if (c <= 0) throw ConfigError("encoder_channels must be positive");
  }
  if (cfg.backbone == Backbone::kRes2Net50 && cfg.encoder_channels != kResidualProfile) {
    throw ConfigError("encoder_channels must be [64, 256, 512, 1024, 2048] for the res2net50 backbone");
  }
  if (cfg.decoder_width <= 0 || cfg.decoder_width % 4 != 0) {
    throw ConfigError("decoder_width must be a positive multiple of 4");
  }
  if (cfg.se_reduction <= 0) throw ConfigError("se_reduction must be positive");
  for (int c : cfg.encoder_channels) {
    if (c % cfg.se_reduction != 0) {
      throw ConfigError("se_reduction " + std::to_string(cfg.se_reduction) + " does not divide encoder channel count " +
                        std::to_string(c));
    }
  }

  AblationConfig& a = cfg.ablation;
  if (a.active_flows.empty()) throw ConfigError("active_flows must not be empty");
  std::set<Flow> unique(a.active_flows.begin(), a.active_flows.end());
  if (unique.size() != a.active_flows.size()) throw ConfigError("active_flows contains duplicates");
  a.active_flows.assign(unique.begin(), unique.end());
  if (a.has_flow(Flow::kComplementary) && a.mdam_mode != MdamMode::kNone &&
      !(a.has_flow(Flow::kRgb) && a.has_flow(Flow::kThermal))) {
    throw ConfigError("mdam_mode '" + to_string(a.mdam_mode) +
                      "' needs both rgb and thermal flows active; use mdam_mode \"none\"");
  }

  const TrainingConfig& t = cfg.training;
  if (!(t.lr > 0.0) || !std::isfinite(t.lr)) throw ConfigError("training.lr must be positive");
  if (t.batch_size < 1) throw ConfigError("training.batch_size must be at least 1");
  if (t.epochs < 1) throw ConfigError("training.epochs must be at least 1");
  if (t.flip_probability < 0.0 || t.flip_probability > 1.0) {
    throw ConfigError("training.flip_probability must lie in [0, 1]");
  }
  if (t.max_rotation_degrees < 0.0 || t.max_rotation_degrees > 180.0) {
    throw ConfigError("training.max_rotation_degrees must lie in [0, 180]");
  }
  if (t.max_crop_fraction < 0.0 || t.max_crop_fraction >= 0.5) {
    throw ConfigError("training.max_crop_fraction must lie in [0, 0.5)");
  }
  if (t.checkpoint_every < 0) throw ConfigError("training.checkpoint_every must be non-negative");
  return cfg;
}

ModelConfig validate_config(const json& raw) {
  check_keys(raw,
             {"input_size", "backbone", "encoder_channels", "decoder_width", "se_reduction", "ablation", "training"}, "");
  ModelConfig cfg;
  if (raw.contains("input_size")) cfg.input_size = read_int(raw["input_size"], "input_size");
  if (raw.contains("backbone")) cfg.backbone = parse_enum(kBackbones, raw["backbone"], "backbone");
  if (cfg.backbone == Backbone::kToy) {
    cfg.encoder_channels = kToyProfile;
    cfg.se_reduction = kToySeReduction;
  }
  if (raw.contains("encoder_channels")) {
    const json& ch = raw["encoder_channels"];
    if (!ch.is_array() || ch.size() != 5) throw ConfigError("field 'encoder_channels' must be an array of 5 integers");
    for (std::size_t i = 0; i < 5; ++i) cfg.encoder_channels[i] = read_int(ch[i], "encoder_channels");
  }
  if (raw.contains("decoder_width")) cfg.decoder_width = read_int(raw["decoder_width"], "decoder_width");
  if (raw.contains("se_reduction")) cfg.se_reduction = read_int(raw["se_reduction"], "se_reduction");
  if (raw.contains("ablation")) parse_ablation(raw["ablation"], cfg.ablation);
  if (raw.contains("training")) parse_training(raw["training"], cfg.training);
  return validate_config(cfg);
}

json to_json(const ModelConfig& cfg) {
  json flows = json::array();
  for (Flow f : cfg.ablation.active_flows) flows.push_back(name_of(kFlows, f));
  const AblationConfig& a = cfg.ablation;
  const TrainingConfig& t = cfg.training;
  return json{{"input_size", cfg.input_size},
              {"backbone", name_of(kBackbones, cfg.backbone)},
              {"encoder_channels", cfg.encoder_channels},
              {"decoder_width", cfg.decoder_width},
              {"se_reduction", cfg.se_reduction},
              {"ablation",
               {{"use_mfm_cfe", a.use_mfm_cfe},
                {"use_mfm_aff", a.use_mfm_aff},
                {"use_raspm_atrous", a.use_raspm_atrous},
                {"mdam_mode", name_of(kMdamModes, a.mdam_mode)},
                {"active_flows", flows},
                {"decoder_block", name_of(kBlocks, a.decoder_block)},
                {"shared_encoder", a.shared_encoder},
                {"loss", name_of(kLosses, a.loss)},
                {"fusion", name_of(kFusions, a.fusion)}}},
              {"training",
               {{"lr", t.lr},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"seed", t.seed},
                {"schedule", name_of(kSchedules, t.schedule)},
                {"augment", t.augment},
                {"flip_probability", t.flip_probability},
                {"max_rotation_degrees", t.max_rotation_degrees},
                {"max_crop_fraction", t.max_crop_fraction},
                {"checkpoint_every", t.checkpoint_every}}}};
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json raw;
  try {
    in >> raw;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return validate_config(raw);
}

ModelConfig apply_delta(const ModelConfig& base, const json& delta) {
  if (!delta.is_object()) throw ConfigError("config delta must be a JSON object");
  json merged = to_json(base);
  merged.merge_patch(delta);
  return validate_config(merged);
}

std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::pair<std::string, json>> fa, fb;
  flatten(to_json(a), "", fa);
  flatten(to_json(b), "", fb);
  std::vector<std::string> diffs;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (fa[i].second != fb[i].second) diffs.push_back(fa[i].first);
  }
  return diffs;
}

}  // namespace contrinet
