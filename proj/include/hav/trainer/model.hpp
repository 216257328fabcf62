#pragma once

#include "hav/faceproxy/dataset.hpp"
#include "hav/neuraltranslate/translate.hpp"
#include "hav/orthorender/orthorender.hpp"
#include "hav/trainer/config.hpp"
#include "hav/volrender/volrender.hpp"

namespace hav::trainer {

using diff::Graph;
using diff::ParamList;
using diff::Tensor;

// All learnable state for one avatar, wired per the ablation switches.
struct AvatarModel {
  TrainConfig cfg;
  int K = 0;      // expression dimension
  int frames = 0; // embedding rows
  int stage = 0;  // highest completed training stage

  planegen::PlaneGenConfig pg_cfg;
  radiancefield::FieldConfig field_cfg;

  planegen::MappingNetwork mapping;       // absent in expr_mlp mode
  planegen::PlaneGenerator gen_front, gen_side;
  planegen::VectorPlaneGenerator vgen_front, vgen_side;
  planegen::EmbeddingTable embeddings;
  radiancefield::Decoder decoder;
  motionwarp::WeightVolumeGenerator wgen;
  neuraltranslate::TranslatorNet translator;
  nn::Conv2d upsample_rgb; // the up-sample-SR ablation head
  neuraltranslate::Discriminator disc;
  neuraltranslate::PerceptualLite percep;

  bool uses_planes() const {
    return cfg.condition_mode != ConditionMode::ExprMlp;
  }
  bool uses_renderings() const {
    return cfg.condition_mode == ConditionMode::Renderings;
  }
  bool uses_mapping() const { return uses_planes(); }

  static AvatarModel make(const TrainConfig& cfg, int K, int frames,
                          int image_size);

  // parameter groups: "main" is everything stage 1 trains; translator and
  // discriminator join in stage 2
  ParamList main_params() const;
  ParamList translator_params() const;
  ParamList disc_params() const;
  ParamList all_params() const;

  motionwarp::TorsoTransform torso() const;
};

// Per-frame constants the renderer conditions on (rendering stacks come
// from the tracked, possibly noise-injected parameters).
struct FrameContext {
  Eigen::VectorXd delta;
  HeadPose pose;
  Tensor front_stack; // {7,R,R}
  Tensor side_stack;  // {14,R,R}, right view mirrored into (z,y) alignment
};

FrameContext make_frame_context(const AvatarModel& model,
                                const faceproxy::BlendshapeModel& head,
                                const Eigen::VectorXd& delta,
                                const HeadPose& pose);

// Owns the per-frame tape tensors the SceneState points into.
struct BuiltScene {
  planegen::FeaturePlanes planes;
  Tensor wvol;
  Tensor extra;
  Tensor gamma;
  volrender::SceneState state;
};

// gamma_row: {1, embed_dim}; pass the table row during training, the frozen
// mean at test time.
BuiltScene build_scene(Graph& g, const AvatarModel& model,
                       const FrameContext& ctx, const Tensor& gamma_row);

// Final image for stage-2 paths: translator (or the up-sample ablation)
// applied to the rendered feature map.
Tensor translate_feature(Graph& g, const AvatarModel& model,
                         const Tensor& feature_map);

// Checkpoint io, magic HAVC1: config text, iteration, rng state, named
// tensors. save -> load -> save is byte identical.
void save_checkpoint(const std::string& path, const AvatarModel& model,
                     uint64_t iteration, const std::string& rng_state);
struct Checkpoint {
  AvatarModel model;
  uint64_t iteration = 0;
  std::string rng_state;
};
Checkpoint load_checkpoint(const std::string& path);

} // namespace hav::trainer
