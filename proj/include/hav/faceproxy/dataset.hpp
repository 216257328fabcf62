#pragma once

#include "hav/faceproxy/blendshape.hpp"
#include "hav/faceproxy/raster.hpp"
#include "hav/image.hpp"

#include <string>
#include <vector>

namespace hav::faceproxy {

struct SynthConfig {
  int frames = 220;
  int image_size = 64;
  int cameras = 1;
  int K = 8;
  double amp_delta = 0.6;   // sup-norm scale of the expression trajectory
  double amp_rot = 0.3;     // radians
  double amp_trans = 0.06;
  double sigma_delta = 0.0; // tracking-noise emulation
  double sigma_pose = 0.0;
  // Trailing frames may get their expression renormalized to a target sup
  // norm (generalization splits draw held-out expressions outside the
  // training range this way). 0 disables.
  int tail_frames = 0;
  double tail_delta_norm = 0.0;
  // Tie the head pose to the expression coefficients for the non-tail
  // frames; the tail keeps its independent pose trajectory, so tail frames
  // hold pose/expression combinations never seen in training.
  bool pose_expr_coupled = false;
  // Pose magnitude multiplier for tail frames (pose extrapolation splits).
  double tail_pose_scale = 1.0;
  uint64_t seed = 1;
};

struct FrameRecord {
  int index = 0;
  Eigen::VectorXd delta, delta_noisy; // clean and tracking-noise-injected
  HeadPose pose_clean, pose_noisy;
};

struct Dataset {
  SynthConfig cfg;
  BlendshapeModel model;
  Mesh torso;
  ShadingParams shading;
  std::vector<Camera> cameras;
  std::vector<FrameRecord> frames;
  std::vector<std::vector<Image>> images; // [frame][camera]
  std::vector<std::vector<Image>> masks;
};

// Deterministic procedural ground truth: images rendered from the clean
// parameters, records carrying both clean and noise-injected values.
Dataset synth_dataset(const SynthConfig& cfg);

// Layout: cam{i}/frame{t}.png, cam{i}/mask{t}.png, params/frame{t}.txt,
// cameras.txt, model.bin.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// params/frame{t}.txt round-trips losslessly
void write_frame_params(const std::string& path, const FrameRecord& rec);
FrameRecord read_frame_params(const std::string& path);

void write_cameras(const std::string& path, const std::vector<Camera>& cams);
std::vector<Camera> read_cameras(const std::string& path);

// `key = value` file with the SynthConfig field names; unknown keys are
// rejected.
SynthConfig parse_synth_config(const std::string& text);
SynthConfig load_synth_config(const std::string& path);
std::string dump_synth_config(const SynthConfig& cfg);

} // namespace hav::faceproxy
