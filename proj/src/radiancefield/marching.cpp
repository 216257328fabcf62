#include "hav/radiancefield/field.hpp"

#include <fstream>
#include <unordered_map>

namespace hav::radiancefield {

namespace {

// Kuhn 6-tetrahedra decomposition of the cell around the 0-7 diagonal.
// Corner c = x | y<<1 | z<<2. Every cell face holds corner 0 or corner 7,
// so neighbouring cells split shared faces along the same diagonal and the
// extracted surface is watertight.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                             {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

struct EdgeKeyHash {
  size_t operator()(uint64_t k) const { return std::hash<uint64_t>()(k); }
};

} // namespace

Mesh extract_mesh(const std::function<double(const Vec3&)>& density, int res,
                  double iso) {
  if (res < 8) throw std::runtime_error("extract_mesh: resolution must be >= 8");
  const int n = res + 1; // lattice points per axis
  std::vector<double> field(size_t(n) * n * n);
  std::vector<Vec3> lattice(size_t(n) * n * n);
  auto lid = [&](int x, int y, int z) {
    return (size_t(z) * n + y) * n + x;
  };
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        Vec3 p(-1.0 + 2.0 * x / res, -1.0 + 2.0 * y / res, -1.0 + 2.0 * z / res);
        lattice[lid(x, y, z)] = p;
        field[lid(x, y, z)] = density(p);
      }

  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> tris;
  std::unordered_map<uint64_t, int, EdgeKeyHash> edge_vertex;

  auto vertex_on_edge = [&](size_t a, size_t b) {
    if (a > b) std::swap(a, b);
    uint64_t key = uint64_t(a) * uint64_t(n) * n * n + uint64_t(b);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double va = field[a], vb = field[b];
    double t = (iso - va) / (vb - va);
    t = std::clamp(t, 0.0, 1.0);
    verts.push_back(lattice[a] + t * (lattice[b] - lattice[a]));
    int id = int(verts.size()) - 1;
    edge_vertex[key] = id;
    return id;
  };

  auto emit = [&](int a, int b, int c, const Vec3& inward_to_out) {
    if (a == b || b == c || a == c) return;
    Vec3 nrm = (verts[b] - verts[a]).cross(verts[c] - verts[a]);
    if (nrm.dot(inward_to_out) < 0) std::swap(b, c);
    tris.emplace_back(a, b, c);
  };

  size_t corner_id[8];
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        for (int c = 0; c < 8; ++c)
          corner_id[c] = lid(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
        for (const auto& tet : kTets) {
          size_t id[4];
          double val[4];
          int mask = 0;
          for (int c = 0; c < 4; ++c) {
            id[c] = corner_id[tet[c]];
            val[c] = field[id[c]];
            if (val[c] > iso) mask |= 1 << c;
          }
          if (mask == 0 || mask == 15) continue;

          int inside[4], outside[4], ni = 0, no = 0;
          for (int c = 0; c < 4; ++c)
            (mask & (1 << c)) ? inside[ni++] = c : outside[no++] = c;
          Vec3 in_c = Vec3::Zero(), out_c = Vec3::Zero();
          for (int c = 0; c < ni; ++c) in_c += lattice[id[inside[c]]];
          for (int c = 0; c < no; ++c) out_c += lattice[id[outside[c]]];
          Vec3 dir = out_c / no - in_c / ni;

          if (ni == 1) {
            int a = vertex_on_edge(id[inside[0]], id[outside[0]]);
            int b = vertex_on_edge(id[inside[0]], id[outside[1]]);
            int c = vertex_on_edge(id[inside[0]], id[outside[2]]);
            emit(a, b, c, dir);
          } else if (ni == 3) {
            int a = vertex_on_edge(id[outside[0]], id[inside[0]]);
            int b = vertex_on_edge(id[outside[0]], id[inside[1]]);
            int c = vertex_on_edge(id[outside[0]], id[inside[2]]);
            emit(a, b, c, dir);
          } else {
            // two inside: quad across the four separating edges, split in two
            int e00 = vertex_on_edge(id[inside[0]], id[outside[0]]);
            int e01 = vertex_on_edge(id[inside[0]], id[outside[1]]);
            int e11 = vertex_on_edge(id[inside[1]], id[outside[1]]);
            int e10 = vertex_on_edge(id[inside[1]], id[outside[0]]);
            emit(e00, e01, e11, dir);
            emit(e00, e11, e10, dir);
          }
        }
      }

  Mesh mesh;
  mesh.V.resize(long(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.V.row(long(i)) = verts[i];
  mesh.F.resize(long(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.F.row(long(i)) = tris[i];
  return mesh;
}

void write_obj(const std::string& path, const Mesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_obj: cannot open " + path);
  f.precision(9);
  for (long i = 0; i < mesh.V.rows(); ++i)
    f << "v " << mesh.V(i, 0) << " " << mesh.V(i, 1) << " " << mesh.V(i, 2) << "\n";
  for (long i = 0; i < mesh.F.rows(); ++i)
    f << "f " << mesh.F(i, 0) + 1 << " " << mesh.F(i, 1) + 1 << " "
      << mesh.F(i, 2) + 1 << "\n";
  if (!f) throw std::runtime_error("write_obj: write failed: " + path);
}

} // namespace hav::radiancefield
