#pragma once

#include "hav/trainer/model.hpp"

namespace hav::trainer {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  AvatarModel model;
  std::vector<double> loss_curve; // one entry per iteration
  uint64_t iterations = 0;
};

// Stage 1: ray-batch optimization of the volume pipeline under the Adam
// optimizer, loss = lambda_rgb * MSE + lambda_mask * BCE + lambda_emb *
// embedding penalty. Deterministic for a fixed config seed. A non-finite
// loss aborts with a diagnostic dump (out_dir/nan_dump.txt when out_dir is
// set).
TrainResult train_stage1(const faceproxy::Dataset& ds, const TrainConfig& cfg,
                         const std::string& out_dir = "");

// Stage 2: joint adversarial training of everything plus the translator
// (or its ablation variant). translator=off continues the stage-1
// objective unchanged.
TrainResult train_stage2(const faceproxy::Dataset& ds, AvatarModel model,
                         const std::string& out_dir = "");

struct FrameMetrics {
  int frame = 0;
  double psnr = 0, iou = 0, percep = 0;
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  double mean_psnr = 0, mean_iou = 0, mean_percep = 0;
  // frame-to-frame silhouette stability over the evaluated sequence:
  // mean and variance of consecutive-frame mask IoU
  double stability_iou_mean = 0, stability_iou_var = 0;
};

// Renders each frame of [first, last) with the frozen mean embedding and
// the recorded tracked parameters, then scores against ground truth.
// translate=true sends the feature map through the translator instead of
// reading the volume-rendered color.
MetricsReport evaluate(const AvatarModel& model, const faceproxy::Dataset& ds,
                       int first, int last, int camera = 0,
                       bool translate = false);

void write_metrics(const MetricsReport& rep, const std::string& txt_path,
                   const std::string& tsv_path);

// One rendered image per driving row (delta, pose), mean embedding fixed.
struct DrivingRow {
  Eigen::VectorXd delta;
  HeadPose pose;
};
std::vector<DrivingRow> read_driving_file(const std::string& path, int K);

std::vector<Image> reenact(const AvatarModel& model,
                           const faceproxy::BlendshapeModel& head,
                           const std::vector<DrivingRow>& rows,
                           const Camera& camera, bool translate = false);

// Render one frame from arbitrary parameters (the `render` CLI surface).
struct FrameRender {
  Image rgb, mask;
  Tensor feature;
};
FrameRender render_single(const AvatarModel& model,
                          const faceproxy::BlendshapeModel& head,
                          const Eigen::VectorXd& delta, const HeadPose& pose,
                          const Camera& camera, bool translate = false);

} // namespace hav::trainer
