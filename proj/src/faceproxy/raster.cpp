#include "hav/faceproxy/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hav::faceproxy {

namespace {

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

} // namespace

void render_scene(const std::vector<const Mesh*>& meshes, const Camera& cam,
                  const ShadingParams& shading, Image& rgb, Image& mask) {
  int w = cam.width, h = cam.height;
  rgb = Image(w, h, 3, shading.background);
  mask = Image(w, h, 1, 0.0);
  std::vector<double> zbuf(size_t(w) * h, std::numeric_limits<double>::infinity());

  for (const Mesh* mesh : meshes) {
    VertexMatrix normals = vertex_normals(*mesh);
    long nv = mesh->V.rows();
    std::vector<double> px(nv), py(nv), pz(nv);
    VertexMatrix shade(nv, 3);
    for (long i = 0; i < nv; ++i) {
      cam.project(mesh->V.row(i), px[i], py[i], pz[i]);
      Vec3 n = normals.row(i);
      double lambert =
          shading.ambient + shading.diffuse * std::max(0.0, n.dot(shading.light_dir));
      Vec3 albedo = mesh->C.rows() == nv ? Vec3(mesh->C.row(i)) : Vec3(0.7, 0.7, 0.7);
      for (int k = 0; k < 3; ++k)
        shade(i, k) = std::clamp(albedo[k] * lambert, 0.0, 1.0);
    }

    for (long f = 0; f < mesh->F.rows(); ++f) {
      int i0 = mesh->F(f, 0), i1 = mesh->F(f, 1), i2 = mesh->F(f, 2);
      if (pz[i0] <= 1e-6 || pz[i1] <= 1e-6 || pz[i2] <= 1e-6) continue;
      double area = edge(px[i0], py[i0], px[i1], py[i1], px[i2], py[i2]);
      if (area == 0.0) continue; // degenerate
      double xmin = std::min({px[i0], px[i1], px[i2]});
      double xmax = std::max({px[i0], px[i1], px[i2]});
      double ymin = std::min({py[i0], py[i1], py[i2]});
      double ymax = std::max({py[i0], py[i1], py[i2]});
      int x0 = std::max(0, int(std::floor(xmin - 0.5)));
      int x1 = std::min(w - 1, int(std::ceil(xmax - 0.5)));
      int y0 = std::max(0, int(std::floor(ymin - 0.5)));
      int y1 = std::min(h - 1, int(std::ceil(ymax - 0.5)));

      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double cx = x + 0.5, cy = y + 0.5; // top-left pixel centers
          double w0 = edge(px[i1], py[i1], px[i2], py[i2], cx, cy) / area;
          double w1 = edge(px[i2], py[i2], px[i0], py[i0], cx, cy) / area;
          double w2 = edge(px[i0], py[i0], px[i1], py[i1], cx, cy) / area;
          if (w0 < 0 || w1 < 0 || w2 < 0) continue;
          double z = w0 * pz[i0] + w1 * pz[i1] + w2 * pz[i2];
          size_t pix = size_t(y) * w + x;
          if (z >= zbuf[pix]) continue;
          zbuf[pix] = z;
          mask.at(0, y, x) = 1.0;
          for (int k = 0; k < 3; ++k)
            rgb.at(k, y, x) =
                w0 * shade(i0, k) + w1 * shade(i1, k) + w2 * shade(i2, k);
        }
    }
  }
}

} // namespace hav::faceproxy
