#include "hav/volrender/volrender.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace hav::volrender {

using namespace diff;

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng ray_rng(const SamplerConfig& cfg, long ray_id) {
  return Rng(splitmix64(cfg.seed ^ splitmix64(uint64_t(ray_id) + 1)));
}

} // namespace

Ray make_ray(const Camera& cam, int row, int col, const SamplerConfig& cfg) {
  Ray r;
  r.origin = cam.position();
  r.dir = cam.ray_dir(col + 0.5, row + 0.5);
  r.id = long(row) * cam.width + col;
  if (cfg.t_range == SamplerConfig::TRange::Fixed) {
    r.t_near = cfg.t_near;
    r.t_far = cfg.t_far;
    r.valid = r.t_near < r.t_far;
  } else {
    double t0, t1;
    if (intersect_canonical_box(r.origin, r.dir, t0, t1) && t1 > 0) {
      r.t_near = std::max(t0, 0.0);
      r.t_far = t1;
      r.valid = r.t_near < r.t_far;
    }
  }
  return r;
}

std::vector<Ray> gen_rays(const Camera& cam, const SamplerConfig& cfg) {
  std::vector<Ray> rays;
  rays.reserve(size_t(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) rays.push_back(make_ray(cam, y, x, cfg));
  return rays;
}

std::vector<double> stratified_samples(double t_near, double t_far, int n,
                                       bool jitter, Rng& rng) {
  std::vector<double> ts(n);
  double w = (t_far - t_near) / n;
  for (int i = 0; i < n; ++i) {
    double u = jitter ? rng.uniform() : 0.5;
    ts[i] = t_near + (i + u) * w;
  }
  return ts;
}

std::vector<double> importance_samples(double t_near, double t_far,
                                       const std::vector<double>& weights,
                                       int m, Rng& rng) {
  int n = int(weights.size());
  double total = 0;
  for (double w : weights) total += std::max(0.0, w);
  if (total <= 0.0) return stratified_samples(t_near, t_far, m, true, rng);

  std::vector<double> cdf(n + 1, 0.0);
  for (int i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + std::max(0.0, weights[i]) / total;
  cdf[n] = 1.0;

  double bin_w = (t_far - t_near) / n;
  std::vector<double> ts(m);
  for (int j = 0; j < m; ++j) {
    double u = rng.uniform();
    int k = int(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) - 1;
    k = std::clamp(k, 0, n - 1);
    double span = cdf[k + 1] - cdf[k];
    double frac = span > 0 ? (u - cdf[k]) / span : 0.5;
    ts[j] = t_near + (k + frac) * bin_w;
  }
  std::sort(ts.begin(), ts.end());
  return ts;
}

namespace {

// Coarse-pass transmittance weights T_i * alpha_i from plain sigma values.
void coarse_weights(const double* sigma, const double* dt, int s, double* w) {
  double trans = 1.0;
  for (int i = 0; i < s; ++i) {
    double a = 1.0 - std::exp(-sigma[i] * dt[i]);
    w[i] = trans * a;
    trans *= (1.0 - a);
  }
}

struct SampledField {
  Tensor sigma; // {N,1}
  Tensor feat;  // {N,cc}
};

SampledField eval_field(Graph& g, const SceneState& scene, const Array& pts) {
  SampledField out;
  // identity pose and torso: T is exactly the identity for any blend weight
  bool warped = !scene.pose.is_identity() || !scene.torso.is_identity();
  Tensor x_c;
  if (warped) {
    check(scene.wvol != nullptr, "render: warped pose needs a weight volume");
    x_c = motionwarp::warp_batch(g, *scene.wvol, pts, scene.pose, scene.torso).x_c;
  } else {
    x_c = Tensor::from({int(pts.size() / 3), 3}, pts);
  }
  auto fs = radiancefield::query_canonical(g, *scene.decoder, *scene.fcfg,
                                           scene.planes, x_c, scene.extra);
  out.sigma = fs.sigma;
  out.feat = fs.feat;
  return out;
}

} // namespace

RenderBatch render_rays(Graph& g, const SceneState& scene,
                        const std::vector<Ray>& rays, const SamplerConfig& cfg) {
  int n_all = int(rays.size());
  int cc = scene.fcfg->cc;
  std::vector<int> valid_idx;
  for (int i = 0; i < n_all; ++i)
    if (rays[i].valid) valid_idx.push_back(i);
  int nv = int(valid_idx.size());

  RenderBatch out;
  if (nv == 0) {
    out.feat = Tensor::zeros({n_all, cc});
    out.mask = Tensor::zeros({n_all});
    Array bg(long(n_all) * 3);
    for (int i = 0; i < n_all; ++i)
      for (int k = 0; k < 3; ++k) bg[3 * i + k] = scene.bg_color[k];
    out.rgb = Tensor::from({n_all, 3}, std::move(bg));
    return out;
  }

  int sc = cfg.n_coarse, sf = cfg.n_fine, s = sc + sf;

  // coarse pass (no gradients) -> per-ray importance weights -> merged ts
  std::vector<std::vector<double>> ray_ts(nv);
  {
    Array coarse_pts(long(nv) * sc * 3);
    std::vector<std::vector<double>> coarse_ts(nv);
    for (int v = 0; v < nv; ++v) {
      const Ray& r = rays[valid_idx[v]];
      Rng rng = ray_rng(cfg, r.id);
      coarse_ts[v] = stratified_samples(r.t_near, r.t_far, sc, cfg.jitter, rng);
      for (int i = 0; i < sc; ++i) {
        Vec3 p = r.origin + coarse_ts[v][i] * r.dir;
        for (int k = 0; k < 3; ++k) coarse_pts[(long(v) * sc + i) * 3 + k] = p[k];
      }
    }
    Graph ng(Graph::NoGrad);
    SampledField cf = eval_field(ng, scene, coarse_pts);

    for (int v = 0; v < nv; ++v) {
      const Ray& r = rays[valid_idx[v]];
      std::vector<double> dt(sc), w(sc);
      for (int i = 0; i < sc; ++i) {
        double next = (i + 1 < sc) ? coarse_ts[v][i + 1] : r.t_far;
        dt[i] = std::max(1e-12, next - coarse_ts[v][i]);
      }
      coarse_weights(cf.sigma.values().data() + long(v) * sc, dt.data(), sc,
                     w.data());
      Rng rng = ray_rng(cfg, ~uint64_t(r.id)); // fine-pass stream
      std::vector<double> fine =
          importance_samples(r.t_near, r.t_far, w, sf, rng);
      ray_ts[v] = coarse_ts[v];
      ray_ts[v].insert(ray_ts[v].end(), fine.begin(), fine.end());
      std::sort(ray_ts[v].begin(), ray_ts[v].end());
    }
  }

  // fine pass over the merged samples, on the live graph
  Array pts(long(nv) * s * 3);
  Array dt(long(nv) * s);
  for (int v = 0; v < nv; ++v) {
    const Ray& r = rays[valid_idx[v]];
    for (int i = 0; i < s; ++i) {
      Vec3 p = r.origin + ray_ts[v][i] * r.dir;
      for (int k = 0; k < 3; ++k) pts[(long(v) * s + i) * 3 + k] = p[k];
      double next = (i + 1 < s) ? ray_ts[v][i + 1] : r.t_far;
      dt[long(v) * s + i] = std::max(1e-12, next - ray_ts[v][i]);
    }
  }

  SampledField ff = eval_field(g, scene, pts);
  Tensor rgb_samples = radiancefield::feature_to_rgb(g, *scene.decoder, ff.feat);
  Tensor featrgb = concat_cols(g, {ff.feat, rgb_samples});
  Tensor sigma_rs = reshape(g, ff.sigma, {nv, s});
  auto [integ, alpha_v] = ray_integrate(g, sigma_rs, featrgb, dt);

  Tensor feat_v = slice_cols(g, integ, 0, cc);
  Tensor rgbraw_v = slice_cols(g, integ, cc, 3);

  Tensor alpha_full, feat_full, rgbraw_full;
  if (nv == n_all) {
    alpha_full = alpha_v;
    feat_full = feat_v;
    rgbraw_full = rgbraw_v;
  } else {
    alpha_full = reshape(
        g, scatter_rows(g, reshape(g, alpha_v, {nv, 1}), valid_idx, n_all),
        {n_all});
    feat_full = scatter_rows(g, feat_v, valid_idx, n_all);
    rgbraw_full = scatter_rows(g, rgbraw_v, valid_idx, n_all);
  }

  // rgb composites over the constant background, features over zero
  Array bg(long(n_all) * 3);
  for (int i = 0; i < n_all; ++i)
    for (int k = 0; k < 3; ++k) bg[3 * i + k] = scene.bg_color[k];
  Tensor bg_rows = Tensor::from({n_all, 3}, std::move(bg));
  Tensor one_minus = add_scalar(g, neg(g, alpha_full), 1.0);
  out.rgb = add(g, rgbraw_full, scale_rows(g, bg_rows, one_minus));
  out.mask = alpha_full;
  out.feat = feat_full;
  return out;
}

RenderOutput render_frame(Graph& g, const SceneState& scene, const Camera& cam,
                          const SamplerConfig& cfg) {
  std::vector<Ray> rays = gen_rays(cam, cfg);
  int n = int(rays.size());
  int cc = scene.fcfg->cc;

  RenderOutput out;
  out.rgb = Image(cam.width, cam.height, 3);
  out.mask = Image(cam.width, cam.height, 1);

  if (g.recording()) {
    RenderBatch batch = render_rays(g, scene, rays, cfg);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) out.rgb.data[size_t(k) * n + i] =
          batch.rgb.values()[long(i) * 3 + k];
      out.mask.data[i] = batch.mask.values()[i];
    }
    out.feature = to_chw(g, batch.feat, cam.height, cam.width);
    return out;
  }

  // forward-only: chunk to bound peak memory
  Array feat_acc(long(cc) * n);
  const int chunk = 4096;
  for (int start = 0; start < n; start += chunk) {
    int len = std::min(chunk, n - start);
    std::vector<Ray> part(rays.begin() + start, rays.begin() + start + len);
    RenderBatch batch = render_rays(g, scene, part, cfg);
    for (int i = 0; i < len; ++i) {
      for (int k = 0; k < 3; ++k)
        out.rgb.data[size_t(k) * n + start + i] = batch.rgb.values()[long(i) * 3 + k];
      out.mask.data[start + i] = batch.mask.values()[i];
      for (int k = 0; k < cc; ++k)
        feat_acc[long(k) * n + start + i] = batch.feat.values()[long(i) * cc + k];
    }
  }
  out.feature = Tensor::from({cc, cam.height, cam.width}, std::move(feat_acc));
  return out;
}

void write_feature_map(const std::string& path, const Tensor& chw) {
  check(chw.rank() == 3, "write_feature_map: need {C,H,W}");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_feature_map: cannot open " + path);
  f.write("FMAP1", 5);
  uint32_t dims[3] = {uint32_t(chw.shape()[0]), uint32_t(chw.shape()[1]),
                      uint32_t(chw.shape()[2])};
  f.write(reinterpret_cast<const char*>(dims), 12);
  f.write(reinterpret_cast<const char*>(chw.values().data()),
          std::streamsize(sizeof(double) * chw.size()));
  if (!f) throw std::runtime_error("write_feature_map: write failed");
}

Tensor read_feature_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_feature_map: cannot open " + path);
  char magic[5];
  f.read(magic, 5);
  if (!f || std::memcmp(magic, "FMAP1", 5) != 0)
    throw std::runtime_error("read_feature_map: bad magic");
  uint32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), 12);
  Array v(long(dims[0]) * dims[1] * dims[2]);
  f.read(reinterpret_cast<char*>(v.data()), std::streamsize(sizeof(double) * v.size()));
  if (!f) throw std::runtime_error("read_feature_map: truncated");
  return Tensor::from({int(dims[0]), int(dims[1]), int(dims[2])}, std::move(v));
}

} // namespace hav::volrender
