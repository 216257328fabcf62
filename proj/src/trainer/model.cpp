#include "hav/trainer/model.hpp"

#include <cstring>
#include <fstream>

namespace hav::trainer {

using namespace diff;

AvatarModel AvatarModel::make(const TrainConfig& cfg, int K, int frames,
                              int image_size) {
  cfg.validate();
  AvatarModel m;
  m.cfg = cfg;
  m.K = K;
  m.frames = frames;

  Rng rng(cfg.seed);

  m.pg_cfg.res = cfg.plane_res;
  m.pg_cfg.cp = cfg.plane_channels;
  m.pg_cfg.d_gamma = cfg.embed_dim;
  m.pg_cfg.d_style = cfg.style_dim;
  m.pg_cfg.enc1 = cfg.enc1;
  m.pg_cfg.enc2 = cfg.enc2;
  m.pg_cfg.enc3 = cfg.enc3;
  m.pg_cfg.map_hidden = cfg.map_hidden;

  m.field_cfg.cp = cfg.plane_channels;
  m.field_cfg.cc = cfg.color_channels;
  m.field_cfg.pe.bands = cfg.posenc_bands;
  m.field_cfg.pe.include_raw = cfg.posenc_raw;
  if (cfg.condition_mode == ConditionMode::ExprMlp) {
    m.field_cfg.use_planes = false;
    m.field_cfg.hidden = cfg.exprmlp_hidden;
    m.field_cfg.layers = cfg.exprmlp_layers;
    m.field_cfg.extra_dim = K + cfg.embed_dim; // delta and gamma as inputs
  } else {
    m.field_cfg.use_planes = true;
    m.field_cfg.hidden = cfg.mlp_hidden;
    m.field_cfg.layers = cfg.mlp_layers;
    m.field_cfg.extra_dim =
        cfg.embedding_condition == EmbeddingCondition::DecoderInput
            ? cfg.embed_dim
            : 0;
  }

  if (m.uses_mapping()) {
    int map_in = 6; // pose always conditions the mapping network
    if (cfg.embedding_condition == EmbeddingCondition::Modulate)
      map_in += cfg.embed_dim;
    if (cfg.condition_mode == ConditionMode::VectorPlaneExprMod) map_in += K;
    m.mapping = planegen::MappingNetwork::make(rng, map_in, cfg.map_hidden,
                                               cfg.style_dim);
  }
  switch (cfg.condition_mode) {
    case ConditionMode::Renderings:
      m.gen_front = planegen::PlaneGenerator::make(rng, 7, m.pg_cfg);
      m.gen_side = planegen::PlaneGenerator::make(rng, 14, m.pg_cfg);
      break;
    case ConditionMode::VectorPlane:
      m.vgen_front = planegen::VectorPlaneGenerator::make(
          rng, planegen::VectorPlaneGenerator::Mode::VectorPlane, K, m.pg_cfg);
      m.vgen_side = planegen::VectorPlaneGenerator::make(
          rng, planegen::VectorPlaneGenerator::Mode::VectorPlane, K, m.pg_cfg);
      break;
    case ConditionMode::VectorPlaneExprMod:
      m.vgen_front = planegen::VectorPlaneGenerator::make(
          rng, planegen::VectorPlaneGenerator::Mode::ExprMod, K, m.pg_cfg);
      m.vgen_side = planegen::VectorPlaneGenerator::make(
          rng, planegen::VectorPlaneGenerator::Mode::ExprMod, K, m.pg_cfg);
      break;
    case ConditionMode::ExprMlp:
      break;
  }

  m.embeddings = planegen::EmbeddingTable::make(rng, frames, cfg.embed_dim,
                                              cfg.embed_init);
  m.decoder = radiancefield::Decoder::make(rng, m.field_cfg);
  m.wgen = motionwarp::WeightVolumeGenerator::make(rng);

  neuraltranslate::TranslatorConfig tc;
  tc.cc = cfg.color_channels;
  tc.res = cfg.plane_res;
  tc.upsample = cfg.translator_up;
  tc.base = cfg.translator_base;
  tc.down = cfg.translator_down;
  m.translator = neuraltranslate::TranslatorNet::make(rng, tc);
  m.upsample_rgb = nn::Conv2d::make(rng, cfg.color_channels, 3, 3, 1);
  m.disc = neuraltranslate::Discriminator::make(rng, image_size,
                                                cfg.disc_levels, cfg.disc_base);
  m.percep = neuraltranslate::PerceptualLite::make();
  return m;
}

ParamList AvatarModel::main_params() const {
  ParamList out;
  if (uses_mapping()) mapping.collect("mapping", out);
  switch (cfg.condition_mode) {
    case ConditionMode::Renderings:
      gen_front.collect("gen_front", out);
      gen_side.collect("gen_side", out);
      break;
    case ConditionMode::VectorPlane:
    case ConditionMode::VectorPlaneExprMod:
      vgen_front.collect("vgen_front", out);
      vgen_side.collect("vgen_side", out);
      break;
    case ConditionMode::ExprMlp:
      break;
  }
  embeddings.collect(out);
  decoder.collect("decoder", out);
  wgen.collect("wvol_gen", out);
  return out;
}

ParamList AvatarModel::translator_params() const {
  ParamList out;
  if (cfg.translator == TranslatorMode::Upsample)
    upsample_rgb.collect("upsample_rgb", out);
  else
    translator.collect("translator", out);
  return out;
}

ParamList AvatarModel::disc_params() const {
  ParamList out;
  disc.collect("disc", out);
  return out;
}

ParamList AvatarModel::all_params() const {
  ParamList out = main_params();
  translator.collect("translator", out);
  upsample_rgb.collect("upsample_rgb", out);
  disc.collect("disc", out);
  return out;
}

motionwarp::TorsoTransform AvatarModel::torso() const {
  motionwarp::TorsoTransform t;
  t.R = axis_angle_to_matrix(
      Vec3(cfg.torso_rot_x, cfg.torso_rot_y, cfg.torso_rot_z));
  t.t = Vec3(cfg.torso_trans_x, cfg.torso_trans_y, cfg.torso_trans_z);
  return t;
}

FrameContext make_frame_context(const AvatarModel& model,
                                const faceproxy::BlendshapeModel& head,
                                const Eigen::VectorXd& delta,
                                const HeadPose& pose) {
  FrameContext ctx;
  ctx.delta = delta;
  ctx.pose = pose;
  if (!model.uses_renderings()) return ctx;

  auto mode = model.cfg.rendering_pose == RenderingPose::Posed
                  ? orthorender::RenderMode::Posed
                  : orthorender::RenderMode::ZeroPosed;
  auto set = orthorender::render_condition_set(head, delta, pose, mode,
                                               model.cfg.plane_res,
                                               model.cfg.texture_channel);
  int r = model.cfg.plane_res;
  auto front = orthorender::stack_channels(set.front);
  ctx.front_stack = Tensor::from(
      {7, r, r}, Eigen::Map<Array>(front.data(), long(front.size())));
  auto left = orthorender::stack_channels(set.left);
  auto right = orthorender::stack_channels_flipped(set.right); // align to (z,y)
  Array side(long(left.size() + right.size()));
  side << Eigen::Map<Array>(left.data(), long(left.size())),
      Eigen::Map<Array>(right.data(), long(right.size()));
  ctx.side_stack = Tensor::from({14, r, r}, std::move(side));
  return ctx;
}

BuiltScene build_scene(Graph& g, const AvatarModel& model,
                       const FrameContext& ctx, const Tensor& gamma_row) {
  BuiltScene s;
  s.gamma = gamma_row;
  Tensor delta_row = Tensor::from(
      {1, model.K},
      Eigen::Map<const Array>(ctx.delta.data(), model.K));

  if (model.uses_planes()) {
    Tensor wstyle;
    if (model.cfg.embedding_condition == EmbeddingCondition::Modulate) {
      const Tensor* extra =
          model.cfg.condition_mode == ConditionMode::VectorPlaneExprMod
              ? &delta_row
              : nullptr;
      wstyle = model.mapping.forward(g, gamma_row, ctx.pose, extra);
    } else {
      // auto-decoding ablation: embeddings feed the decoder instead
      Tensor empty = Tensor::zeros({1, 0});
      const Tensor* extra =
          model.cfg.condition_mode == ConditionMode::VectorPlaneExprMod
              ? &delta_row
              : nullptr;
      wstyle = model.mapping.forward(g, empty, ctx.pose, extra);
    }
    switch (model.cfg.condition_mode) {
      case ConditionMode::Renderings:
        s.planes.front = model.gen_front.forward(g, ctx.front_stack, wstyle);
        s.planes.side = model.gen_side.forward(g, ctx.side_stack, wstyle);
        break;
      case ConditionMode::VectorPlane:
      case ConditionMode::VectorPlaneExprMod:
        s.planes.front =
            model.vgen_front.forward(g, &delta_row, wstyle, model.pg_cfg);
        s.planes.side =
            model.vgen_side.forward(g, &delta_row, wstyle, model.pg_cfg);
        break;
      case ConditionMode::ExprMlp:
        break;
    }
  }

  if (model.field_cfg.extra_dim > 0) {
    if (model.cfg.condition_mode == ConditionMode::ExprMlp)
      s.extra = concat_cols(g, {delta_row, gamma_row});
    else
      s.extra = gamma_row;
  }

  s.wvol = model.wgen.forward(g);
  s.state.decoder = &model.decoder;
  s.state.fcfg = &model.field_cfg;
  s.state.planes = model.uses_planes() ? &s.planes : nullptr;
  s.state.wvol = &s.wvol;
  s.state.pose = ctx.pose;
  s.state.torso = model.torso();
  s.state.extra = s.extra.valid() ? &s.extra : nullptr;
  s.state.bg_color = Vec3::Constant(model.cfg.bg_color);
  return s;
}

Tensor translate_feature(Graph& g, const AvatarModel& model,
                         const Tensor& feature_map) {
  if (model.cfg.translator == TranslatorMode::Upsample) {
    Tensor up = upsample2(g, feature_map);
    if (model.cfg.translator_up == 4) up = upsample2(g, up);
    return sigmoid(g, model.upsample_rgb.forward(g, up));
  }
  return model.translator.forward(g, feature_map);
}

namespace {

void write_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

} // namespace

void save_checkpoint(const std::string& path, const AvatarModel& model,
                     uint64_t iteration, const std::string& rng_state) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write("HAVC1", 5);
  write_u32(f, 1); // version
  std::string cfg = dump_config(model.cfg);
  cfg += "# K = " + std::to_string(model.K) + "\n";
  cfg += "# frames = " + std::to_string(model.frames) + "\n";
  cfg += "# stage = " + std::to_string(model.stage) + "\n";
  cfg += "# image_size = " + std::to_string(model.disc.in_h) + "\n";
  write_u32(f, uint32_t(cfg.size()));
  f.write(cfg.data(), std::streamsize(cfg.size()));
  f.write(reinterpret_cast<const char*>(&iteration), 8);
  write_u32(f, uint32_t(rng_state.size()));
  f.write(rng_state.data(), std::streamsize(rng_state.size()));

  ParamList params = model.all_params();
  write_u32(f, uint32_t(params.size()));
  for (const auto& p : params) {
    write_u32(f, uint32_t(p.name.size()));
    f.write(p.name.data(), std::streamsize(p.name.size()));
    f.put(0); // dtype: f64
    write_u32(f, uint32_t(p.t.rank()));
    for (int d : p.t.shape()) write_u32(f, uint32_t(d));
    f.write(reinterpret_cast<const char*>(p.t.values().data()),
            std::streamsize(sizeof(double) * p.t.size()));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[5];
  f.read(magic, 5);
  if (!f || std::memcmp(magic, "HAVC1", 5) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint32_t version = read_u32(f);
  if (version != 1)
    throw std::runtime_error("load_checkpoint: unsupported version");

  uint32_t cfg_len = read_u32(f);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), cfg_len);

  // the commented trailer carries the model-shape metadata
  int K = 0, frames = 0, stage = 0, image_size = 0;
  {
    std::istringstream is(cfg_text);
    std::string line;
    while (std::getline(is, line)) {
      if (sscanf(line.c_str(), "# K = %d", &K) == 1) continue;
      if (sscanf(line.c_str(), "# frames = %d", &frames) == 1) continue;
      if (sscanf(line.c_str(), "# stage = %d", &stage) == 1) continue;
      if (sscanf(line.c_str(), "# image_size = %d", &image_size) == 1) continue;
    }
  }
  TrainConfig cfg = parse_config_text(cfg_text);

  Checkpoint ck;
  ck.model = AvatarModel::make(cfg, K, frames, image_size);
  ck.model.stage = stage;
  f.read(reinterpret_cast<char*>(&ck.iteration), 8);
  uint32_t rng_len = read_u32(f);
  ck.rng_state.resize(rng_len);
  f.read(ck.rng_state.data(), rng_len);

  ParamList params = ck.model.all_params();
  uint32_t count = read_u32(f);
  if (count != params.size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  for (auto& p : params) {
    uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (name != p.name)
      throw std::runtime_error("load_checkpoint: expected tensor '" + p.name +
                               "', found '" + name + "'");
    if (f.get() != 0) throw std::runtime_error("load_checkpoint: dtype");
    uint32_t rank = read_u32(f);
    diff::Shape shape(rank);
    for (auto& d : shape) d = int(read_u32(f));
    if (shape != p.t.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + p.name);
    f.read(reinterpret_cast<char*>(p.t.values().data()),
           std::streamsize(sizeof(double) * p.t.size()));
  }
  if (!f) throw std::runtime_error("load_checkpoint: truncated " + path);
  return ck;
}

} // namespace hav::trainer
