#pragma once

#include "hav/geometry.hpp"
#include "hav/nn/layers.hpp"
#include "hav/planegen/planegen.hpp"

#include <functional>

namespace hav::radiancefield {

using diff::Graph;
using diff::ParamList;
using diff::Rng;
using diff::Tensor;
using planegen::FeaturePlanes;

struct PosEncConfig {
  int bands = 6;
  bool include_raw = true;
  int dim() const { return diff::posenc_dim(bands, include_raw); }
};

struct FieldConfig {
  int cp = 16;      // per-plane channels
  int cc = 8;       // color feature channels
  int hidden = 64;
  int layers = 2;   // hidden layers
  PosEncConfig pe;
  bool use_planes = true; // false: pure-MLP ablation (no plane features)
  int extra_dim = 0;      // appended per-point conditioning (gamma/delta)

  int input_dim() const {
    return (use_planes ? 2 * cp : 0) + pe.dim() + extra_dim;
  }
};

// Density/feature decoder over the sampled point feature. The field has no
// view-direction input: a 3D point decodes identically for every camera.
struct Decoder {
  std::vector<nn::Linear> hidden_layers;
  nn::Linear sigma_head; // -> 1, through softplus
  nn::Linear feat_head;  // -> cc
  nn::Linear rgb_head;   // cc -> 3, single linear layer + sigmoid

  static Decoder make(Rng& rng, const FieldConfig& cfg);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FieldSample {
  Tensor sigma; // {N,1}, nonnegative
  Tensor feat;  // {N,cc}
};

// Canonical-space query: front plane sampled at the (x,y) projection, side
// plane at (z,y), concatenated with the positional encoding (plus any extra
// conditioning rows) and decoded. Out-of-bounds points see zero plane
// features.
FieldSample query_canonical(Graph& g, const Decoder& dec, const FieldConfig& cfg,
                            const FeaturePlanes* planes, const Tensor& pts,
                            const Tensor* extra_row = nullptr);

Tensor feature_to_rgb(Graph& g, const Decoder& dec, const Tensor& feat);

// Single-point convenience for probes and tests.
struct PointSample {
  double sigma;
  Eigen::VectorXd feat;
};
PointSample query_point(const Decoder& dec, const FieldConfig& cfg,
                        const FeaturePlanes* planes, const Vec3& x_c);

// Isosurface extraction over the canonical box on a res^3 cell grid
// (marching cubes over a 6-tetrahedra cell decomposition; vertices by
// linear edge interpolation, welded on shared lattice edges).
Mesh extract_mesh(const std::function<double(const Vec3&)>& density, int res,
                  double iso);
void write_obj(const std::string& path, const Mesh& mesh);

} // namespace hav::radiancefield
