#include "hav/planegen/planegen.hpp"

namespace hav::planegen {

using namespace diff;

EmbeddingTable EmbeddingTable::make(Rng& rng, int frames, int d_gamma,
                                    double init_std) {
  EmbeddingTable t;
  t.table = nn::randn_tensor(rng, {frames, d_gamma}, init_std);
  return t;
}

Tensor EmbeddingTable::lookup(Graph& g, int frame) const {
  return row(g, table, frame);
}

Tensor EmbeddingTable::mean_embedding() const {
  int n = table.shape()[0], d = table.shape()[1];
  Array m = Array::Zero(d);
  for (int i = 0; i < n; ++i) m += table.values().segment(long(i) * d, d);
  m /= double(n);
  return Tensor::from({1, d}, std::move(m));
}

Tensor EmbeddingTable::penalty(Graph& g) const {
  return mean(g, square(g, table));
}

MappingNetwork MappingNetwork::make(Rng& rng, int in_dim, int hidden,
                                    int d_style) {
  MappingNetwork m;
  m.in_dim = in_dim;
  m.fc1 = nn::Linear::make(rng, in_dim, hidden);
  m.fc2 = nn::Linear::make(rng, hidden, d_style);
  return m;
}

Tensor MappingNetwork::forward(Graph& g, const Tensor& gamma,
                               const HeadPose& pose, const Tensor* extra) const {
  Array p(6);
  p << pose.rotation[0], pose.rotation[1], pose.rotation[2],
      pose.translation[0], pose.translation[1], pose.translation[2];
  std::vector<Tensor> parts{gamma, Tensor::from({1, 6}, std::move(p))};
  if (extra) parts.push_back(*extra);
  Tensor in = concat_cols(g, parts);
  check(in.shape()[1] == in_dim, "mapping network: input dim " +
                                     std::to_string(in.shape()[1]) + " != " +
                                     std::to_string(in_dim));
  return fc2.forward(g, lrelu(g, fc1.forward(g, in)));
}

void MappingNetwork::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

PlaneGenerator PlaneGenerator::make(Rng& rng, int in_channels,
                                    const PlaneGenConfig& cfg) {
  PlaneGenerator p;
  p.e1 = nn::Conv2d::make(rng, in_channels, cfg.enc1, 3, 1);
  p.e2 = nn::Conv2d::make(rng, cfg.enc1, cfg.enc2, 3, 2);
  p.e3 = nn::Conv2d::make(rng, cfg.enc2, cfg.enc3, 3, 2);
  p.d3 = nn::ModConv2d::make(rng, cfg.enc3, cfg.enc3, 3, cfg.d_style);
  p.d2 = nn::ModConv2d::make(rng, cfg.enc3 + cfg.enc2, cfg.enc2, 3, cfg.d_style);
  p.d1 = nn::ModConv2d::make(rng, cfg.enc2 + cfg.enc1, cfg.enc1, 3, cfg.d_style);
  p.head = nn::Conv2d::make(rng, cfg.enc1, cfg.cp, 1, 1);
  return p;
}

Tensor PlaneGenerator::forward(Graph& g, const Tensor& stack,
                               const Tensor& wstyle) const {
  Tensor e1f = lrelu(g, e1.forward(g, stack));
  Tensor e2f = lrelu(g, e2.forward(g, e1f));
  Tensor e3f = lrelu(g, e3.forward(g, e2f));
  Tensor d3f = lrelu(g, d3.forward(g, e3f, wstyle));
  Tensor d2f = lrelu(g, d2.forward(g, concat_chan(g, upsample2(g, d3f), e2f), wstyle));
  Tensor d1f = lrelu(g, d1.forward(g, concat_chan(g, upsample2(g, d2f), e1f), wstyle));
  return head.forward(g, d1f);
}

void PlaneGenerator::collect(const std::string& prefix, ParamList& out) const {
  e1.collect(prefix + ".e1", out);
  e2.collect(prefix + ".e2", out);
  e3.collect(prefix + ".e3", out);
  d3.collect(prefix + ".d3", out);
  d2.collect(prefix + ".d2", out);
  d1.collect(prefix + ".d1", out);
  head.collect(prefix + ".head", out);
}

VectorPlaneGenerator VectorPlaneGenerator::make(Rng& rng, Mode mode,
                                                int expr_dim,
                                                const PlaneGenConfig& cfg) {
  VectorPlaneGenerator v;
  v.mode = mode;
  int r4 = cfg.res / 4;
  if (mode == Mode::VectorPlane)
    v.seed_fc = nn::Linear::make(rng, expr_dim, cfg.enc3 * r4 * r4);
  else
    v.seed_const = nn::randn_tensor(rng, {cfg.enc3, r4, r4}, 1.0);
  v.d3 = nn::ModConv2d::make(rng, cfg.enc3, cfg.enc3, 3, cfg.d_style);
  v.d2 = nn::ModConv2d::make(rng, cfg.enc3, cfg.enc2, 3, cfg.d_style);
  v.d1 = nn::ModConv2d::make(rng, cfg.enc2, cfg.enc1, 3, cfg.d_style);
  v.head = nn::Conv2d::make(rng, cfg.enc1, cfg.cp, 1, 1);
  return v;
}

Tensor VectorPlaneGenerator::forward(Graph& g, const Tensor* delta_row,
                                     const Tensor& wstyle,
                                     const PlaneGenConfig& cfg) const {
  int r4 = cfg.res / 4;
  Tensor seed;
  if (mode == Mode::VectorPlane) {
    check(delta_row != nullptr, "VectorPlane mode needs the expression vector");
    seed = reshape(g, lrelu(g, seed_fc.forward(g, *delta_row)),
                   {cfg.enc3, r4, r4});
  } else {
    seed = seed_const;
  }
  Tensor d3f = lrelu(g, d3.forward(g, seed, wstyle));
  Tensor d2f = lrelu(g, d2.forward(g, upsample2(g, d3f), wstyle));
  Tensor d1f = lrelu(g, d1.forward(g, upsample2(g, d2f), wstyle));
  return head.forward(g, d1f);
}

void VectorPlaneGenerator::collect(const std::string& prefix,
                                   ParamList& out) const {
  if (mode == Mode::VectorPlane)
    seed_fc.collect(prefix + ".seed_fc", out);
  else
    out.push_back({prefix + ".seed_const", seed_const});
  d3.collect(prefix + ".d3", out);
  d2.collect(prefix + ".d2", out);
  d1.collect(prefix + ".d1", out);
  head.collect(prefix + ".head", out);
}

} // namespace hav::planegen
