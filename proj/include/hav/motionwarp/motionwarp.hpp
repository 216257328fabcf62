#pragma once

#include "hav/geometry.hpp"
#include "hav/nn/layers.hpp"

namespace hav::motionwarp {

using diff::Graph;
using diff::ParamList;
using diff::Rng;
using diff::Tensor;

// Blends the inverse head transform against the torso transform; static
// identity unless configured otherwise.
struct TorsoTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  bool is_identity() const { return R.isIdentity(0.0) && t.isZero(0.0); }
};

// 3D convolutional decoder from a fixed random seed to the canonical
// head/torso weight grid, through a sigmoid. Gradients reach it only via
// the rendering loss.
struct WeightVolumeGenerator {
  Tensor seed;           // {c0,2,2,2}, constant
  Tensor w1, w2, w3;     // transposed conv weights {Ci,Co,4,4,4}
  Tensor b1, b2, b3;     // channel biases
  int resolution = 16;

  static WeightVolumeGenerator make(Rng& rng, int resolution = 16);
  // -> {D,D,D} grid of weights in [0,1] over the canonical box
  Tensor forward(Graph& g) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Eq-style blend weight at observed point x:
//   w_p = a / (a + (1 - b) + eps), a = w_c(inv(pose) x), b = w_c(x)
// with eps guarding the undefined a=0, b=1 corner (biases toward torso).
constexpr double kBlendEps = 1e-6;

// Canonical-volume sample in observed coordinates (canonical box mapped to
// the unit cube; outside the box the torso default 0 applies).
double sample_weight(const Tensor& wvol, const Vec3& x);

double blend_weight(const Tensor& wvol, const Vec3& x, const HeadPose& pose);

Vec3 warp_to_canonical(const Vec3& x, const HeadPose& pose,
                       const TorsoTransform& torso, double w_p);

// Point probe of the full warp T(x, pose).
Vec3 warp_point(const Tensor& wvol, const Vec3& x, const HeadPose& pose,
                const TorsoTransform& torso);

// Batched differentiable warp: observed points (constant) to canonical
// points, gradient flowing through the weight volume.
struct WarpBatch {
  Tensor x_c; // {N,3}
  Tensor w_p; // {N}
};
WarpBatch warp_batch(Graph& g, const Tensor& wvol, const diff::Array& pts_xyz,
                     const HeadPose& pose, const TorsoTransform& torso);

// Debug dump, magic WVOL1: D then D^3 raw values.
void write_weight_volume(const std::string& path, const Tensor& wvol);
Tensor read_weight_volume(const std::string& path);

} // namespace hav::motionwarp
