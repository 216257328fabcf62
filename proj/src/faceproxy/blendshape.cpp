#include "hav/faceproxy/blendshape.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace hav::faceproxy {

namespace {

struct MeshBuilder {
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;

  int add(const Vec3& v) {
    verts.push_back(v);
    return int(verts.size()) - 1;
  }
  void tri(int a, int b, int c) { faces.emplace_back(a, b, c); }

  Mesh build() const {
    Mesh m;
    m.V.resize(long(verts.size()), 3);
    for (size_t i = 0; i < verts.size(); ++i) m.V.row(long(i)) = verts[i];
    m.F.resize(long(faces.size()), 3);
    for (size_t i = 0; i < faces.size(); ++i) m.F.row(long(i)) = faces[i];
    return m;
  }
};

// Unit icosphere via midpoint subdivision.
MeshBuilder icosphere(int subdivisions) {
  MeshBuilder b;
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  const double v[12][3] = {{-1, t, 0},  {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                           {0, -1, t},  {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                           {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) b.add(Vec3(p[0], p[1], p[2]).normalized());
  const int f[20][3] = {{0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10},
                        {0, 10, 11}, {1, 5, 9},   {5, 11, 4},  {11, 10, 2},
                        {10, 7, 6},  {7, 1, 8},   {3, 9, 4},   {3, 4, 2},
                        {3, 2, 6},   {3, 6, 8},   {3, 8, 9},   {4, 9, 5},
                        {2, 4, 11},  {6, 2, 10},  {8, 6, 7},   {9, 8, 1}};
  for (auto& tr : f) b.tri(tr[0], tr[1], tr[2]);

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int c) {
      auto key = std::minmax(a, c);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      int id = b.add(((b.verts[a] + b.verts[c]) * 0.5).normalized());
      mid[key] = id;
      return id;
    };
    std::vector<Eigen::Vector3i> next;
    for (auto& tr : b.faces) {
      int ab = midpoint(tr[0], tr[1]);
      int bc = midpoint(tr[1], tr[2]);
      int ca = midpoint(tr[2], tr[0]);
      next.emplace_back(tr[0], ab, ca);
      next.emplace_back(tr[1], bc, ab);
      next.emplace_back(tr[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    b.faces = std::move(next);
  }
  return b;
}

void append_box(MeshBuilder& b, const Vec3& lo, const Vec3& hi) {
  int base = int(b.verts.size());
  for (int i = 0; i < 8; ++i)
    b.add(Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
               i & 4 ? hi.z() : lo.z()));
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (auto& q : quads) {
    b.tri(base + q[0], base + q[1], base + q[2]);
    b.tri(base + q[0], base + q[2], base + q[3]);
  }
}

VertexMatrix procedural_albedo(const VertexMatrix& V, const Vec3& base,
                               double variation) {
  VertexMatrix C(V.rows(), 3);
  for (long i = 0; i < V.rows(); ++i) {
    double x = V(i, 0), y = V(i, 1), z = V(i, 2);
    double p1 = std::sin(7.0 * x + 3.0 * y);
    double p2 = std::sin(5.0 * y - 4.0 * z + 1.3);
    double p3 = std::sin(6.0 * z + 5.0 * x - 0.7);
    Vec3 c = base + variation * Vec3(p1, p2, p3);
    for (int k = 0; k < 3; ++k) C(i, k) = std::clamp(c[k], 0.05, 0.95);
  }
  return C;
}

} // namespace

BlendshapeModel make_head_model(int K) {
  MeshBuilder b = icosphere(2);
  for (auto& v : b.verts) v *= 0.5; // head sphere radius
  append_box(b, Vec3(-0.08, -0.07, 0.50), Vec3(0.08, 0.09, 0.66)); // nose
  BlendshapeModel m;
  m.base = b.build();
  m.base.C = procedural_albedo(m.base.V, Vec3(0.76, 0.60, 0.52), 0.16);

  // Lobe centers spread over the sphere; deformation is radial from the
  // head center with a Gaussian falloff, so expression coefficients shift
  // the silhouette, not just shading.
  const double lobe_dirs[8][3] = {{0, 0.4, 1},   {0, -0.5, 0.9}, {1, 0.2, 0.2},
                                  {-1, 0.2, 0.2}, {0, 1, 0.15},  {0.4, -1, 0.4},
                                  {0.7, 0.5, 0.6}, {-0.7, 0.5, 0.6}};
  const double amp = 0.16, sigma = 0.28;
  for (int k = 0; k < K; ++k) {
    Vec3 dir = Vec3(lobe_dirs[k % 8]).normalized();
    if (k >= 8) dir = -dir; // reuse with opposite sign past the base set
    Vec3 center = 0.5 * dir;
    VertexMatrix d(m.base.V.rows(), 3);
    for (long i = 0; i < m.base.V.rows(); ++i) {
      Vec3 v = m.base.V.row(i);
      double fall = std::exp(-(v - center).squaredNorm() / (2 * sigma * sigma));
      Vec3 radial = v.norm() > 1e-9 ? Vec3(v.normalized()) : dir;
      d.row(i) = (amp * fall) * radial;
    }
    m.deltas.push_back(std::move(d));
  }
  return m;
}

Mesh make_torso_mesh() {
  MeshBuilder b;
  append_box(b, Vec3(-0.62, -1.0, -0.35), Vec3(0.62, -0.62, 0.35));
  Mesh m = b.build();
  m.C = procedural_albedo(m.V, Vec3(0.30, 0.38, 0.56), 0.12);
  return m;
}

Mesh deform_mesh(const BlendshapeModel& model, const Eigen::VectorXd& delta) {
  if (delta.size() != model.K())
    throw std::runtime_error("deform_mesh: expected " +
                             std::to_string(model.K()) + " coefficients, got " +
                             std::to_string(delta.size()));
  Mesh m = model.base;
  for (int k = 0; k < model.K(); ++k)
    if (delta[k] != 0.0) m.V += delta[k] * model.deltas[k];
  return m;
}

Mesh apply_pose(const Mesh& mesh, const HeadPose& pose) {
  Mesh m = mesh;
  Mat3 R = pose.R();
  m.V = (mesh.V * R.transpose()).rowwise() + pose.translation.transpose();
  return m;
}

VertexMatrix vertex_normals(const Mesh& mesh) {
  VertexMatrix N = VertexMatrix::Zero(mesh.V.rows(), 3);
  for (long f = 0; f < mesh.F.rows(); ++f) {
    Vec3 a = mesh.V.row(mesh.F(f, 0));
    Vec3 b = mesh.V.row(mesh.F(f, 1));
    Vec3 c = mesh.V.row(mesh.F(f, 2));
    Vec3 fn = (b - a).cross(c - a); // magnitude = 2 * area
    for (int j = 0; j < 3; ++j) N.row(mesh.F(f, j)) += fn.transpose();
  }
  for (long i = 0; i < N.rows(); ++i) {
    double n = N.row(i).norm();
    if (n > 1e-12) N.row(i) /= n;
  }
  return N;
}

namespace {

void write_bytes(std::ofstream& f, const void* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

void read_bytes(std::ifstream& f, void* p, size_t n) {
  f.read(reinterpret_cast<char*>(p), std::streamsize(n));
  if (!f) throw std::runtime_error("model io: truncated file");
}

} // namespace

void save_model(const std::string& path, const BlendshapeModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_model: cannot open " + path);
  f.write("FPXY1", 5);
  uint32_t ver = 1, V = uint32_t(model.base.V.rows()),
           F = uint32_t(model.base.F.rows()), K = uint32_t(model.K());
  write_bytes(f, &ver, 4);
  write_bytes(f, &V, 4);
  write_bytes(f, &F, 4);
  write_bytes(f, &K, 4);
  write_bytes(f, model.base.V.data(), sizeof(double) * V * 3);
  write_bytes(f, model.base.C.data(), sizeof(double) * V * 3);
  std::vector<int32_t> faces(size_t(F) * 3);
  for (uint32_t i = 0; i < F; ++i)
    for (int j = 0; j < 3; ++j) faces[i * 3 + j] = model.base.F(i, j);
  write_bytes(f, faces.data(), sizeof(int32_t) * faces.size());
  for (const auto& d : model.deltas)
    write_bytes(f, d.data(), sizeof(double) * V * 3);
  if (!f) throw std::runtime_error("save_model: write failed: " + path);
}

BlendshapeModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_model: cannot open " + path);
  char magic[5];
  read_bytes(f, magic, 5);
  if (std::memcmp(magic, "FPXY1", 5) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  uint32_t ver, V, F, K;
  read_bytes(f, &ver, 4);
  if (ver != 1) throw std::runtime_error("load_model: unsupported version");
  read_bytes(f, &V, 4);
  read_bytes(f, &F, 4);
  read_bytes(f, &K, 4);
  BlendshapeModel m;
  m.base.V.resize(V, 3);
  m.base.C.resize(V, 3);
  read_bytes(f, m.base.V.data(), sizeof(double) * V * 3);
  read_bytes(f, m.base.C.data(), sizeof(double) * V * 3);
  std::vector<int32_t> faces(size_t(F) * 3);
  read_bytes(f, faces.data(), sizeof(int32_t) * faces.size());
  m.base.F.resize(F, 3);
  for (uint32_t i = 0; i < F; ++i)
    for (int j = 0; j < 3; ++j) m.base.F(i, j) = faces[i * 3 + j];
  for (uint32_t k = 0; k < K; ++k) {
    VertexMatrix d(V, 3);
    read_bytes(f, d.data(), sizeof(double) * V * 3);
    m.deltas.push_back(std::move(d));
  }
  return m;
}

} // namespace hav::faceproxy
