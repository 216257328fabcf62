#pragma once

#include "hav/geometry.hpp"
#include "hav/image.hpp"
#include "hav/motionwarp/motionwarp.hpp"
#include "hav/radiancefield/field.hpp"

namespace hav::volrender {

using diff::Graph;
using diff::Tensor;

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ(); // unit norm
  double t_near = 0, t_far = 0;
  long id = 0;   // pixel id; seeds the per-ray sampler (per-ray purity)
  bool valid = false;
};

struct SamplerConfig {
  int n_coarse = 32;
  int n_fine = 8;
  bool jitter = true;
  uint64_t seed = 0;
  // Box: clip each ray to the canonical box (rays that miss are flagged
  // empty and composite to background). Fixed: constant camera-frame range,
  // equivariant under rigid scene/camera recomposition.
  enum class TRange { Box, Fixed };
  TRange t_range = TRange::Box;
  double t_near = 0.4, t_far = 4.6;
};

Ray make_ray(const Camera& cam, int row, int col, const SamplerConfig& cfg);
std::vector<Ray> gen_rays(const Camera& cam, const SamplerConfig& cfg);

// One sample per equal bin: midpoints, or uniform within the bin.
std::vector<double> stratified_samples(double t_near, double t_far, int n,
                                       bool jitter, diff::Rng& rng);
// Inverse-CDF draws from the piecewise-constant pdf the weights define over
// the n_coarse equal bins of [t_near, t_far]; all-zero weights fall back to
// a stratified draw. Output sorted.
std::vector<double> importance_samples(double t_near, double t_far,
                                       const std::vector<double>& weights,
                                       int m, diff::Rng& rng);

// Everything needed to evaluate the observed-space field H = H_C o T.
struct SceneState {
  const radiancefield::Decoder* decoder = nullptr;
  const radiancefield::FieldConfig* fcfg = nullptr;
  const planegen::FeaturePlanes* planes = nullptr;
  const Tensor* wvol = nullptr;
  HeadPose pose;
  motionwarp::TorsoTransform torso;
  const Tensor* extra = nullptr; // {1,E} per-frame decoder conditioning
  Vec3 bg_color = Vec3(0.5, 0.5, 0.5);
};

struct RenderBatch {
  Tensor rgb;  // {N,3} composited over the configured background
  Tensor mask; // {N} accumulated alpha
  Tensor feat; // {N,cc} composited over zeros
};

// Two-pass rendering of a ray batch: gradient-free coarse pass for the
// importance weights, then one integration over the merged coarse+fine
// samples on the live graph. Per-ray sampling depends only on (seed, ray
// id), so results do not depend on how a pixel set is batched.
RenderBatch render_rays(Graph& g, const SceneState& scene,
                        const std::vector<Ray>& rays, const SamplerConfig& cfg);

struct RenderOutput {
  Image rgb;      // {3,R,R}
  Image mask;     // {1,R,R}
  Tensor feature; // {cc,R,R}
};
RenderOutput render_frame(Graph& g, const SceneState& scene, const Camera& cam,
                          const SamplerConfig& cfg);

// Raw feature-map dump, magic FMAP1.
void write_feature_map(const std::string& path, const Tensor& chw);
Tensor read_feature_map(const std::string& path);

} // namespace hav::volrender
