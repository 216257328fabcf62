#include "hav/orthorender/orthorender.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

namespace hav::orthorender {

using faceproxy::deform_mesh;
using faceproxy::apply_pose;
using faceproxy::vertex_normals;

namespace {

struct ViewAxes {
  int u_axis;
  double u_sign;
  int d_axis;
  double d_sign; // larger signed depth wins (closer to the viewer)
};

ViewAxes axes_of(OrthoView v) {
  switch (v) {
    case OrthoView::Front: return {0, +1.0, 2, +1.0};
    case OrthoView::Left: return {2, +1.0, 0, -1.0};
    default: return {2, -1.0, 0, +1.0};
  }
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

} // namespace

ViewMaps rasterize_ortho(const Mesh& mesh, OrthoView view, int res) {
  ViewMaps maps;
  maps.normal = Image(res, res, 3, 0.0);
  maps.texture = Image(res, res, 3, 0.0);
  maps.mask = Image(res, res, 1, 0.0);
  if (mesh.V.rows() == 0) return maps;

  ViewAxes ax = axes_of(view);
  VertexMatrix normals = vertex_normals(mesh);
  long nv = mesh.V.rows();
  std::vector<double> px(nv), py(nv), depth(nv);
  for (long i = 0; i < nv; ++i) {
    double u = ax.u_sign * mesh.V(i, ax.u_axis);
    double y = mesh.V(i, 1);
    px[i] = (u + 1.0) * 0.5 * res;
    py[i] = (1.0 - y) * 0.5 * res;
    depth[i] = ax.d_sign * mesh.V(i, ax.d_axis);
  }

  std::vector<double> zbuf(size_t(res) * res,
                           -std::numeric_limits<double>::infinity());
  for (long f = 0; f < mesh.F.rows(); ++f) {
    int i0 = mesh.F(f, 0), i1 = mesh.F(f, 1), i2 = mesh.F(f, 2);
    double area = edge(px[i0], py[i0], px[i1], py[i1], px[i2], py[i2]);
    if (area == 0.0) continue; // degenerate in this projection
    int x0 = std::max(0, int(std::floor(std::min({px[i0], px[i1], px[i2]}) - 0.5)));
    int x1 = std::min(res - 1, int(std::ceil(std::max({px[i0], px[i1], px[i2]}) - 0.5)));
    int y0 = std::max(0, int(std::floor(std::min({py[i0], py[i1], py[i2]}) - 0.5)));
    int y1 = std::min(res - 1, int(std::ceil(std::max({py[i0], py[i1], py[i2]}) - 0.5)));

    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double cx = x + 0.5, cy = y + 0.5;
        double w0 = edge(px[i1], py[i1], px[i2], py[i2], cx, cy) / area;
        double w1 = edge(px[i2], py[i2], px[i0], py[i0], cx, cy) / area;
        double w2 = edge(px[i0], py[i0], px[i1], py[i1], cx, cy) / area;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        double d = w0 * depth[i0] + w1 * depth[i1] + w2 * depth[i2];
        size_t pix = size_t(y) * res + x;
        if (d <= zbuf[pix]) continue;
        zbuf[pix] = d;
        maps.mask.at(0, y, x) = 1.0;
        Vec3 n = w0 * normals.row(i0) + w1 * normals.row(i1) + w2 * normals.row(i2);
        double nn = n.norm();
        if (nn > 1e-12) n /= nn;
        for (int k = 0; k < 3; ++k) {
          maps.normal.at(k, y, x) = 0.5 * (n[k] + 1.0);
          double c = mesh.C.rows() == nv
                         ? w0 * mesh.C(i0, k) + w1 * mesh.C(i1, k) + w2 * mesh.C(i2, k)
                         : 0.0;
          maps.texture.at(k, y, x) = std::clamp(c, 0.0, 1.0);
        }
      }
  }
  return maps;
}

RenderingSet render_condition_set(const BlendshapeModel& model,
                                  const Eigen::VectorXd& delta,
                                  const HeadPose& pose, RenderMode mode,
                                  int res, bool texture_channel) {
  Mesh mesh = deform_mesh(model, delta);
  if (mode == RenderMode::Posed) mesh = apply_pose(mesh, pose);
  RenderingSet set;
  set.res = res;
  set.front = rasterize_ortho(mesh, OrthoView::Front, res);
  set.left = rasterize_ortho(mesh, OrthoView::Left, res);
  set.right = rasterize_ortho(mesh, OrthoView::Right, res);
  if (!texture_channel) {
    for (ViewMaps* v : {&set.front, &set.left, &set.right})
      std::fill(v->texture.data.begin(), v->texture.data.end(), 0.0);
  }
  return set;
}

std::vector<double> stack_channels(const ViewMaps& maps) {
  std::vector<double> out;
  out.reserve(maps.normal.data.size() + maps.texture.data.size() +
              maps.mask.data.size());
  out.insert(out.end(), maps.normal.data.begin(), maps.normal.data.end());
  out.insert(out.end(), maps.texture.data.begin(), maps.texture.data.end());
  out.insert(out.end(), maps.mask.data.begin(), maps.mask.data.end());
  return out;
}

std::vector<double> stack_channels_flipped(const ViewMaps& maps) {
  std::vector<double> out = stack_channels(maps);
  int res = maps.mask.w;
  for (int ch = 0; ch < 7; ++ch)
    for (int y = 0; y < res; ++y) {
      double* rowp = out.data() + (size_t(ch) * res + y) * res;
      for (int x = 0; x < res / 2; ++x) std::swap(rowp[x], rowp[res - 1 - x]);
    }
  return out;
}

void dump_rendering_set(const RenderingSet& set, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const ViewMaps& v, const std::string& name) {
    write_png(dir + "/" + name + "_normal.png", v.normal);
    write_png(dir + "/" + name + "_texture.png", v.texture);
    write_png(dir + "/" + name + "_mask.png", v.mask);
  };
  dump(set.front, "front");
  dump(set.left, "left");
  dump(set.right, "right");
}

} // namespace hav::orthorender
