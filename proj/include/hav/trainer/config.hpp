#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hav::trainer {

enum class ConditionMode { Renderings, VectorPlane, VectorPlaneExprMod, ExprMlp };
enum class RenderingPose { Zero, Posed };
enum class EmbeddingCondition { Modulate, DecoderInput };
enum class TranslatorMode { Unet, Upsample, Separate, Off };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every key in the `key = value` config file, with the shipped defaults.
struct TrainConfig {
  // stage-1 losses
  double lambda_rgb = 1.0;
  double lambda_mask = 0.1;
  double lambda_emb = 1e-3;
  // stage-2 losses
  double lambda_recon = 1.0;
  double lambda_percep = 0.1;
  double lambda_adv = 0.05;
  double lambda_r1 = 1.0;
  // optimization
  double lr_translator = 1e-3;
  double lr_main = 5e-4;
  int stage1_iters = 3000;
  int stage2_iters = 500;
  int ray_batch = 1024;
  int log_every = 100;
  // sampling
  int n_coarse = 32;
  int n_fine = 8;
  bool jitter = true;
  // model dimensions
  int plane_res = 32;
  int plane_channels = 16;
  int embed_dim = 16;
  double embed_init = 0.01;
  int style_dim = 32;
  int enc1 = 16, enc2 = 32, enc3 = 64;
  int map_hidden = 64;
  int mlp_hidden = 64;
  int mlp_layers = 2;
  int color_channels = 8;
  int posenc_bands = 6;
  bool posenc_raw = true;
  int exprmlp_hidden = 128;
  int exprmlp_layers = 4;
  int translator_base = 16;
  int translator_down = 2;
  int translator_up = 2;
  int disc_levels = 4;
  int disc_base = 16;
  // ablation switches
  ConditionMode condition_mode = ConditionMode::Renderings;
  RenderingPose rendering_pose = RenderingPose::Zero;
  bool texture_channel = true;
  EmbeddingCondition embedding_condition = EmbeddingCondition::Modulate;
  TranslatorMode translator = TranslatorMode::Unet;
  // scene / data
  int train_frames = 200;
  double bg_color = 0.5;
  double torso_rot_x = 0, torso_rot_y = 0, torso_rot_z = 0;
  double torso_trans_x = 0, torso_trans_y = 0, torso_trans_z = 0;
  uint64_t seed = 1;

  void validate() const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string dump_config(const TrainConfig& cfg); // deterministic key order

std::string to_string(ConditionMode m);
std::string to_string(RenderingPose m);
std::string to_string(EmbeddingCondition m);
std::string to_string(TranslatorMode m);

} // namespace hav::trainer
