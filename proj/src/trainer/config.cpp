#include "hav/trainer/config.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <fstream>
#include <vector>

namespace hav::trainer {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError("config: bad number for '" + key + "': " + v);
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (...) {
    throw ConfigError("config: bad integer for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: bad flag for '" + key + "': " + v);
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v,
             const std::vector<std::pair<std::string, E>>& table) {
  for (const auto& [name, value] : table)
    if (name == v) return value;
  throw ConfigError("config: bad value for '" + key + "': " + v);
}

const std::vector<std::pair<std::string, ConditionMode>> kConditionModes = {
    {"renderings", ConditionMode::Renderings},
    {"vector_plane", ConditionMode::VectorPlane},
    {"vector_plane_exprmod", ConditionMode::VectorPlaneExprMod},
    {"expr_mlp", ConditionMode::ExprMlp}};
const std::vector<std::pair<std::string, RenderingPose>> kRenderingPoses = {
    {"zero", RenderingPose::Zero}, {"posed", RenderingPose::Posed}};
const std::vector<std::pair<std::string, EmbeddingCondition>> kEmbedModes = {
    {"modulate", EmbeddingCondition::Modulate},
    {"decoder_input", EmbeddingCondition::DecoderInput}};
const std::vector<std::pair<std::string, TranslatorMode>> kTranslatorModes = {
    {"unet", TranslatorMode::Unet},
    {"upsample", TranslatorMode::Upsample},
    {"separate", TranslatorMode::Separate},
    {"off", TranslatorMode::Off}};

#define F_DOUBLE(name)                                                     \
  {#name, [](const TrainConfig& c) { return fmt_double(c.name); },        \
   [](TrainConfig& c, const std::string& v) { c.name = parse_double(#name, v); }}
#define F_INT(name)                                                        \
  {#name, [](const TrainConfig& c) { return std::to_string(c.name); },    \
   [](TrainConfig& c, const std::string& v) { c.name = parse_int(#name, v); }}
#define F_BOOL(name)                                                       \
  {#name, [](const TrainConfig& c) { return c.name ? "on" : "off"; },     \
   [](TrainConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }}
#define F_ENUM(name, table)                                                \
  {#name, [](const TrainConfig& c) { return to_string(c.name); },         \
   [](TrainConfig& c, const std::string& v) {                              \
     c.name = parse_enum(#name, v, table);                                 \
   }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      F_DOUBLE(lambda_rgb),
      F_DOUBLE(lambda_mask),
      F_DOUBLE(lambda_emb),
      F_DOUBLE(lambda_recon),
      F_DOUBLE(lambda_percep),
      F_DOUBLE(lambda_adv),
      F_DOUBLE(lambda_r1),
      F_DOUBLE(lr_translator),
      F_DOUBLE(lr_main),
      F_INT(stage1_iters),
      F_INT(stage2_iters),
      F_INT(ray_batch),
      F_INT(log_every),
      F_INT(n_coarse),
      F_INT(n_fine),
      F_BOOL(jitter),
      F_INT(plane_res),
      F_INT(plane_channels),
      F_INT(embed_dim),
      F_DOUBLE(embed_init),
      F_INT(style_dim),
      F_INT(enc1),
      F_INT(enc2),
      F_INT(enc3),
      F_INT(map_hidden),
      F_INT(mlp_hidden),
      F_INT(mlp_layers),
      F_INT(color_channels),
      F_INT(posenc_bands),
      F_BOOL(posenc_raw),
      F_INT(exprmlp_hidden),
      F_INT(exprmlp_layers),
      F_INT(translator_base),
      F_INT(translator_down),
      F_INT(translator_up),
      F_INT(disc_levels),
      F_INT(disc_base),
      F_ENUM(condition_mode, kConditionModes),
      F_ENUM(rendering_pose, kRenderingPoses),
      F_BOOL(texture_channel),
      F_ENUM(embedding_condition, kEmbedModes),
      F_ENUM(translator, kTranslatorModes),
      F_INT(train_frames),
      F_DOUBLE(bg_color),
      F_DOUBLE(torso_rot_x),
      F_DOUBLE(torso_rot_y),
      F_DOUBLE(torso_rot_z),
      F_DOUBLE(torso_trans_x),
      F_DOUBLE(torso_trans_y),
      F_DOUBLE(torso_trans_z),
      {"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& v) {
         try {
           c.seed = std::stoull(v);
         } catch (...) {
           throw ConfigError("config: bad seed: " + v);
         }
       }},
  };
  return f;
}

#undef F_DOUBLE
#undef F_INT
#undef F_BOOL
#undef F_ENUM

} // namespace

std::string to_string(ConditionMode m) {
  for (const auto& [name, value] : kConditionModes)
    if (value == m) return name;
  return "?";
}
std::string to_string(RenderingPose m) {
  for (const auto& [name, value] : kRenderingPoses)
    if (value == m) return name;
  return "?";
}
std::string to_string(EmbeddingCondition m) {
  for (const auto& [name, value] : kEmbedModes)
    if (value == m) return name;
  return "?";
}
std::string to_string(TranslatorMode m) {
  for (const auto& [name, value] : kTranslatorModes)
    if (value == m) return name;
  return "?";
}

void TrainConfig::validate() const {
  for (double l : {lambda_rgb, lambda_mask, lambda_emb, lambda_recon,
                   lambda_percep, lambda_adv, lambda_r1})
    if (l < 0) throw ConfigError("config: loss weights must be nonnegative");
  if (plane_res % 4 != 0) throw ConfigError("config: plane_res must be /4");
  if (n_coarse < 1) throw ConfigError("config: n_coarse must be >= 1");
  if (translator_up != 2 && translator_up != 4)
    throw ConfigError("config: translator_up must be 2 or 4");
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields())
      if (f.key == key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    if (!found) throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << "\n";
  return os.str();
}

} // namespace hav::trainer
