#include "hav/radiancefield/field.hpp"

namespace hav::radiancefield {

using namespace diff;

Decoder Decoder::make(Rng& rng, const FieldConfig& cfg) {
  Decoder d;
  int in = cfg.input_dim();
  for (int i = 0; i < cfg.layers; ++i) {
    d.hidden_layers.push_back(nn::Linear::make(rng, in, cfg.hidden));
    in = cfg.hidden;
  }
  d.sigma_head = nn::Linear::make(rng, in, 1);
  d.feat_head = nn::Linear::make(rng, in, cfg.cc);
  d.rgb_head = nn::Linear::make(rng, cfg.cc, 3);
  return d;
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  for (size_t i = 0; i < hidden_layers.size(); ++i)
    hidden_layers[i].collect(prefix + ".h" + std::to_string(i), out);
  sigma_head.collect(prefix + ".sigma", out);
  feat_head.collect(prefix + ".feat", out);
  rgb_head.collect(prefix + ".rgb", out);
}

FieldSample query_canonical(Graph& g, const Decoder& dec, const FieldConfig& cfg,
                            const FeaturePlanes* planes, const Tensor& pts,
                            const Tensor* extra_row) {
  check(pts.rank() == 2 && pts.shape()[1] == 3, "query_canonical: pts {N,3}");
  int n = pts.shape()[0];
  std::vector<Tensor> parts;

  if (cfg.use_planes) {
    check(planes != nullptr, "query_canonical: planes required");
    Tensor x = slice_cols(g, pts, 0, 1);
    Tensor y = slice_cols(g, pts, 1, 1);
    Tensor z = slice_cols(g, pts, 2, 1);
    Tensor v = add_scalar(g, mul_scalar(g, y, -0.5), 0.5); // rows from y=+1 down
    Tensor uv_front = concat_cols(g, {add_scalar(g, mul_scalar(g, x, 0.5), 0.5), v});
    Tensor uv_side = concat_cols(g, {add_scalar(g, mul_scalar(g, z, 0.5), 0.5), v});
    parts.push_back(bilinear_sample(g, planes->front, uv_front));
    parts.push_back(bilinear_sample(g, planes->side, uv_side));
  }
  parts.push_back(posenc(g, pts, cfg.pe.bands, cfg.pe.include_raw));
  if (cfg.extra_dim > 0) {
    check(extra_row != nullptr && extra_row->shape()[1] == cfg.extra_dim,
          "query_canonical: extra conditioning dim mismatch");
    parts.push_back(repeat_row(g, *extra_row, n));
  }

  Tensor h = concat_cols(g, parts);
  for (const auto& layer : dec.hidden_layers) h = relu(g, layer.forward(g, h));
  FieldSample out;
  out.sigma = softplus(g, dec.sigma_head.forward(g, h));
  out.feat = dec.feat_head.forward(g, h);
  return out;
}

Tensor feature_to_rgb(Graph& g, const Decoder& dec, const Tensor& feat) {
  return sigmoid(g, dec.rgb_head.forward(g, feat));
}

PointSample query_point(const Decoder& dec, const FieldConfig& cfg,
                        const FeaturePlanes* planes, const Vec3& x_c) {
  Graph g(Graph::NoGrad);
  Array p(3);
  p << x_c.x(), x_c.y(), x_c.z();
  FieldSample s = query_canonical(g, dec, cfg, planes, Tensor::from({1, 3}, p));
  PointSample out;
  out.sigma = s.sigma.values()[0];
  out.feat = Eigen::Map<const Eigen::VectorXd>(s.feat.values().data(),
                                               s.feat.size());
  return out;
}

} // namespace hav::radiancefield
