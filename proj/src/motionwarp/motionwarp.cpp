#include "hav/motionwarp/motionwarp.hpp"

#include <cstring>
#include <fstream>

namespace hav::motionwarp {

using namespace diff;

WeightVolumeGenerator WeightVolumeGenerator::make(Rng& rng, int resolution) {
  check(resolution == 16, "weight volume generator is a fixed 2->16 stack");
  WeightVolumeGenerator w;
  w.resolution = resolution;
  const int c0 = 16, c1 = 8, c2 = 4;
  w.seed = nn::randn_tensor(rng, {c0, 2, 2, 2}, 1.0, false); // constant input
  w.w1 = nn::randn_tensor(rng, {c0, c1, 4, 4, 4}, std::sqrt(2.0 / (c0 * 8)));
  w.w2 = nn::randn_tensor(rng, {c1, c2, 4, 4, 4}, std::sqrt(2.0 / (c1 * 8)));
  w.w3 = nn::randn_tensor(rng, {c2, 1, 4, 4, 4}, std::sqrt(2.0 / (c2 * 8)));
  w.b1 = Tensor::zeros({c1}, true);
  w.b2 = Tensor::zeros({c2}, true);
  // head-dominant start (w_c ~ 0.88 in-box): the inverse head transform is
  // active from the first step and the torso region trains downward
  w.b3 = Tensor::from({1}, Array::Constant(1, 2.0), true);
  return w;
}

Tensor WeightVolumeGenerator::forward(Graph& g) const {
  Tensor h = lrelu(g, add_channel_bias(g, conv3d_transpose(g, seed, w1, 2, 1), b1));
  h = lrelu(g, add_channel_bias(g, conv3d_transpose(g, h, w2, 2, 1), b2));
  h = add_channel_bias(g, conv3d_transpose(g, h, w3, 2, 1), b3);
  return sigmoid(g, reshape(g, h, {resolution, resolution, resolution}));
}

void WeightVolumeGenerator::collect(const std::string& prefix,
                                    ParamList& out) const {
  out.push_back({prefix + ".w1", w1});
  out.push_back({prefix + ".w2", w2});
  out.push_back({prefix + ".w3", w3});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".b2", b2});
  out.push_back({prefix + ".b3", b3});
}

namespace {

inline void to_unit(const Vec3& x, double* out) {
  out[0] = 0.5 * (x.x() + 1.0);
  out[1] = 0.5 * (x.y() + 1.0);
  out[2] = 0.5 * (x.z() + 1.0);
}

} // namespace

double sample_weight(const Tensor& wvol, const Vec3& x) {
  double u[3];
  to_unit(x, u);
  return trilinear_sample_point(wvol, u[0], u[1], u[2]);
}

double blend_weight(const Tensor& wvol, const Vec3& x, const HeadPose& pose) {
  Mat3 rh = pose.R().transpose();
  Vec3 th = -(rh * pose.translation);
  double a = sample_weight(wvol, rh * x + th);
  double b = sample_weight(wvol, x);
  return a / (a + (1.0 - b) + kBlendEps);
}

Vec3 warp_to_canonical(const Vec3& x, const HeadPose& pose,
                       const TorsoTransform& torso, double w_p) {
  Mat3 rh = pose.R().transpose();
  Vec3 th = -(rh * pose.translation);
  Vec3 head = rh * x + th;
  Vec3 body = torso.R * x + torso.t;
  return w_p * head + (1.0 - w_p) * body;
}

Vec3 warp_point(const Tensor& wvol, const Vec3& x, const HeadPose& pose,
                const TorsoTransform& torso) {
  return warp_to_canonical(x, pose, torso, blend_weight(wvol, x, pose));
}

WarpBatch warp_batch(Graph& g, const Tensor& wvol, const Array& pts_xyz,
                     const HeadPose& pose, const TorsoTransform& torso) {
  check(pts_xyz.size() % 3 == 0, "warp_batch: points must be flat xyz");
  int n = int(pts_xyz.size() / 3);
  Mat3 rh = pose.R().transpose();
  Vec3 th = -(rh * pose.translation);

  Array head_pts(3 * n), body_pts(3 * n), unit_head(3 * n), unit_obs(3 * n);
  for (int i = 0; i < n; ++i) {
    Vec3 x(pts_xyz[3 * i], pts_xyz[3 * i + 1], pts_xyz[3 * i + 2]);
    Vec3 hp = rh * x + th;
    Vec3 bp = torso.R * x + torso.t;
    for (int k = 0; k < 3; ++k) {
      head_pts[3 * i + k] = hp[k];
      body_pts[3 * i + k] = bp[k];
    }
    to_unit(hp, unit_head.data() + 3 * i);
    to_unit(x, unit_obs.data() + 3 * i);
  }

  Tensor a = trilinear_sample(g, wvol, Tensor::from({n, 3}, unit_head));
  Tensor b = trilinear_sample(g, wvol, Tensor::from({n, 3}, unit_obs));
  Tensor den = add_scalar(g, sub(g, a, b), 1.0 + kBlendEps);
  Tensor w_p = divide(g, a, den);

  Tensor head_c = Tensor::from({n, 3}, head_pts);
  Tensor body_c = Tensor::from({n, 3}, body_pts);
  Tensor one_minus = add_scalar(g, neg(g, w_p), 1.0);
  WarpBatch out;
  out.x_c = add(g, scale_rows(g, head_c, w_p), scale_rows(g, body_c, one_minus));
  out.w_p = w_p;
  return out;
}

void write_weight_volume(const std::string& path, const Tensor& wvol) {
  check(wvol.rank() == 3, "write_weight_volume: need {D,D,D}");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_weight_volume: cannot open " + path);
  f.write("WVOL1", 5);
  uint32_t d = uint32_t(wvol.shape()[0]);
  f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(wvol.values().data()),
          std::streamsize(sizeof(double) * wvol.size()));
  if (!f) throw std::runtime_error("write_weight_volume: write failed");
}

Tensor read_weight_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_weight_volume: cannot open " + path);
  char magic[5];
  f.read(magic, 5);
  if (!f || std::memcmp(magic, "WVOL1", 5) != 0)
    throw std::runtime_error("read_weight_volume: bad magic");
  uint32_t d = 0;
  f.read(reinterpret_cast<char*>(&d), 4);
  Array v(long(d) * d * d);
  f.read(reinterpret_cast<char*>(v.data()), std::streamsize(sizeof(double) * v.size()));
  if (!f) throw std::runtime_error("read_weight_volume: truncated");
  return Tensor::from({int(d), int(d), int(d)}, std::move(v));
}

} // namespace hav::motionwarp
