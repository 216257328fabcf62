#pragma once

#include "hav/geometry.hpp"
#include "hav/nn/layers.hpp"

namespace hav::planegen {

using diff::Graph;
using diff::ParamList;
using diff::Rng;
using diff::Tensor;

struct PlaneGenConfig {
  int res = 32;     // rendering and plane resolution (coupled)
  int cp = 16;      // plane channels
  int d_gamma = 16; // embedding dim
  int d_style = 32; // style vector dim
  int enc1 = 16, enc2 = 32, enc3 = 64;
  int map_hidden = 64;
};

// Per-training-frame learnable codes; test time uses the frozen mean row.
struct EmbeddingTable {
  Tensor table; // {frames, d_gamma}

  static EmbeddingTable make(Rng& rng, int frames, int d_gamma,
                             double init_std = 0.01);
  Tensor lookup(Graph& g, int frame) const; // {1, d_gamma}
  Tensor mean_embedding() const;            // constant {1, d_gamma}
  // mean of squared entries
  Tensor penalty(Graph& g) const;
  void collect(ParamList& out) const { out.push_back({"embeddings", table}); }
};

// Shared MLP from (embedding, pose [, expression]) to the style vector
// modulating every generator.
struct MappingNetwork {
  nn::Linear fc1, fc2;
  int in_dim = 0;

  static MappingNetwork make(Rng& rng, int in_dim, int hidden, int d_style);
  // input: gamma {1,dg} ++ pose (axis-angle + translation, 6 raw values)
  // ++ optional extra (expression vector for the exprmod ablation)
  Tensor forward(Graph& g, const Tensor& gamma, const HeadPose& pose,
                 const Tensor* extra = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Conditioned 2D generator: conv encoder over the rendering stack,
// modulated decoder with the encoder features injected at matching
// resolutions. Two independent instances serve the front and side planes.
struct PlaneGenerator {
  nn::Conv2d e1, e2, e3;
  nn::ModConv2d d3, d2, d1;
  nn::Conv2d head;

  static PlaneGenerator make(Rng& rng, int in_channels, const PlaneGenConfig& cfg);
  // stack {in,R,R} constant, wstyle {1,d_style}; -> {cp,R,R}
  Tensor forward(Graph& g, const Tensor& stack, const Tensor& wstyle) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Ablation generator with no rendering input: the plane is decoded from an
// expression-driven seed (VectorPlane) or a learned constant seed whose
// style path carries the expression (VectorPlane/ExprMod).
struct VectorPlaneGenerator {
  enum class Mode { VectorPlane, ExprMod };
  Mode mode = Mode::VectorPlane;
  nn::Linear seed_fc; // VectorPlane: expression -> seed
  Tensor seed_const;  // ExprMod: learned constant
  nn::ModConv2d d3, d2, d1;
  nn::Conv2d head;

  static VectorPlaneGenerator make(Rng& rng, Mode mode, int expr_dim,
                                   const PlaneGenConfig& cfg);
  Tensor forward(Graph& g, const Tensor* delta_row, const Tensor& wstyle,
                 const PlaneGenConfig& cfg) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FeaturePlanes {
  Tensor front; // {cp, R, R}
  Tensor side;  // {cp, R, R}
};

} // namespace hav::planegen
