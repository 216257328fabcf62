#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hav/diffcore/gradcheck.hpp"
#include "hav/radiancefield/field.hpp"

#include <cmath>
#include <map>
#include <filesystem>
#include <fstream>
#include <set>

using namespace hav;
using namespace hav::radiancefield;
using diff::Array;
using diff::Graph;
using diff::Rng;
using diff::Tensor;

namespace {

FeaturePlanes random_planes(Rng& rng, int cp, int res, bool requires_grad = false) {
  FeaturePlanes p;
  p.front = nn::randn_tensor(rng, {cp, res, res}, 0.5, requires_grad);
  p.side = nn::randn_tensor(rng, {cp, res, res}, 0.5, requires_grad);
  return p;
}

} // namespace

TEST_CASE("posenc: zero input gives zero sines and unit cosines") {
  Graph g(Graph::NoGrad);
  Tensor pts = Tensor::zeros({1, 3});
  Tensor pe = diff::posenc(g, pts, 4, true);
  REQUIRE(pe.shape() == diff::Shape{1, 27}); // 3 raw + 6*4
  for (int i = 0; i < 3; ++i) CHECK(pe.values()[i] == 0.0);
  for (int band = 0; band < 4; ++band)
    for (int a = 0; a < 3; ++a) {
      CHECK(pe.values()[3 + 6 * band + a] == 0.0);       // sin
      CHECK(pe.values()[3 + 6 * band + 3 + a] == 1.0);   // cos
    }
}

TEST_CASE("posenc: encoded part stays within [-1,1]") {
  Rng rng(3);
  Graph g(Graph::NoGrad);
  Tensor pts = nn::randn_tensor(rng, {50, 3}, 2.0, false);
  Tensor pe = diff::posenc(g, pts, 6, true);
  int dim = 3 + 36;
  for (int n = 0; n < 50; ++n)
    for (int i = 3; i < dim; ++i) {
      CHECK(pe.values()[n * dim + i] <= 1.0);
      CHECK(pe.values()[n * dim + i] >= -1.0);
    }
}

TEST_CASE("query_canonical: density is nonnegative over 10^4 random points") {
  Rng rng(5);
  FieldConfig cfg;
  cfg.cp = 4;
  cfg.cc = 4;
  cfg.hidden = 16;
  FeaturePlanes planes = random_planes(rng, 4, 8);
  Decoder dec = Decoder::make(rng, cfg);
  Graph g(Graph::NoGrad);
  Tensor pts = nn::randn_tensor(rng, {10000, 3}, 1.0, false);
  FieldSample s = query_canonical(g, dec, cfg, &planes, pts);
  CHECK(s.sigma.values().minCoeff() >= 0.0);
  CHECK(diff::all_finite(s.sigma));
  CHECK(diff::all_finite(s.feat));
}

TEST_CASE("query_canonical: far outside bounds only the encoding remains") {
  Rng rng(7);
  FieldConfig cfg;
  cfg.cp = 4;
  cfg.cc = 4;
  cfg.hidden = 16;
  FeaturePlanes planes = random_planes(rng, 4, 8);
  FeaturePlanes zeros;
  zeros.front = Tensor::zeros({4, 8, 8});
  zeros.side = Tensor::zeros({4, 8, 8});
  Decoder dec = Decoder::make(rng, cfg);
  Graph g(Graph::NoGrad);
  Array far(3);
  far << 3.7, -2.5, 9.0;
  Tensor pts = Tensor::from({1, 3}, far);
  FieldSample a = query_canonical(g, dec, cfg, &planes, pts);
  FieldSample b = query_canonical(g, dec, cfg, &zeros, pts);
  CHECK(a.sigma.values()[0] == b.sigma.values()[0]);
  CHECK((a.feat.values() - b.feat.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("query_canonical: identical queries decode identically (no view input)") {
  Rng rng(9);
  FieldConfig cfg;
  cfg.cp = 4;
  cfg.cc = 4;
  cfg.hidden = 16;
  FeaturePlanes planes = random_planes(rng, 4, 8);
  Decoder dec = Decoder::make(rng, cfg);
  PointSample s1 = query_point(dec, cfg, &planes, Vec3(0.2, -0.1, 0.4));
  PointSample s2 = query_point(dec, cfg, &planes, Vec3(0.2, -0.1, 0.4));
  CHECK(s1.sigma == s2.sigma);
  CHECK((s1.feat - s2.feat).norm() == 0.0);
}

TEST_CASE("gradcheck: density and color reach the plane features") {
  Rng rng(11);
  FieldConfig cfg;
  cfg.cp = 3;
  cfg.cc = 3;
  cfg.hidden = 12;
  cfg.pe.bands = 2;
  FeaturePlanes planes = random_planes(rng, 3, 6, true);
  Decoder dec = Decoder::make(rng, cfg);
  Array pv(6);
  pv << 0.21, -0.13, 0.37, -0.42, 0.11, 0.03;
  Tensor pts = Tensor::from({2, 3}, pv);
  auto fn = [&](Graph& g) {
    FieldSample s = query_canonical(g, dec, cfg, &planes, pts);
    return add(g, mean(g, square(g, s.sigma)), mean(g, square(g, s.feat)));
  };
  auto res = diff::grad_check("field_planes", {planes.front, planes.side}, fn);
  INFO(res.worst);
  CHECK(res.pass);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("feature_to_rgb: sigmoid head fixed points and range") {
  Rng rng(13);
  FieldConfig cfg;
  cfg.cc = 4;
  Decoder dec = Decoder::make(rng, cfg);
  dec.rgb_head.W.values().setZero();
  dec.rgb_head.b.values().setZero();
  Graph g(Graph::NoGrad);
  Tensor feat = nn::randn_tensor(rng, {5, 4}, 1.0, false);
  Tensor rgb = feature_to_rgb(g, dec, feat);
  for (long i = 0; i < rgb.size(); ++i)
    CHECK(rgb.values()[i] == doctest::Approx(0.5).epsilon(1e-15));

  // linear pre-activation: logit(head(a*c)) scales linearly when bias is 0
  Rng rng2(14);
  Decoder dec2 = Decoder::make(rng2, cfg);
  dec2.rgb_head.b.values().setZero();
  Tensor c1 = nn::randn_tensor(rng2, {1, 4}, 1.0, false);
  Tensor c2 = Tensor::from({1, 4}, Array(2.0 * c1.values()));
  Tensor r1 = feature_to_rgb(g, dec2, c1);
  Tensor r2 = feature_to_rgb(g, dec2, c2);
  for (int k = 0; k < 3; ++k) {
    double l1 = std::log(r1.values()[k] / (1 - r1.values()[k]));
    double l2 = std::log(r2.values()[k] / (1 - r2.values()[k]));
    CHECK(l2 == doctest::Approx(2.0 * l1).epsilon(1e-9));
    CHECK(r1.values()[k] > 0.0);
    CHECK(r1.values()[k] < 1.0);
  }
}

TEST_CASE("extract_mesh: sphere indicator lands within 1.5 cells of the radius") {
  auto density = [](const Vec3& p) { return p.norm() < 0.5 ? 1.0 : 0.0; };
  int res = 48;
  Mesh m = extract_mesh(density, res, 0.5);
  REQUIRE(m.V.rows() > 100);
  double cell = 2.0 / res;
  for (long i = 0; i < m.V.rows(); ++i)
    CHECK(std::abs(m.V.row(i).norm() - 0.5) <= 1.5 * cell);
}

TEST_CASE("extract_mesh: zero field extracts nothing") {
  Mesh m = extract_mesh([](const Vec3&) { return 0.0; }, 16, 10.0);
  CHECK(m.F.rows() == 0);
}

TEST_CASE("extract_mesh: closed surfaces have every edge on exactly 2 triangles") {
  auto blobby = [](const Vec3& p) {
    return std::exp(-4.0 * (p - Vec3(0.2, 0, 0)).squaredNorm()) +
           std::exp(-6.0 * (p + Vec3(0.25, 0.1, 0)).squaredNorm());
  };
  for (double iso : {0.3, 0.5}) {
    Mesh m = extract_mesh(blobby, 24, iso);
    REQUIRE(m.F.rows() > 50);
    std::map<std::pair<int, int>, int> edge_count;
    for (long f = 0; f < m.F.rows(); ++f)
      for (int e = 0; e < 3; ++e) {
        int a = m.F(f, e), b = m.F(f, (e + 1) % 3);
        edge_count[std::minmax(a, b)]++;
      }
    for (const auto& [edge, count] : edge_count) CHECK(count == 2);
  }
}

TEST_CASE("extract_mesh rejects tiny grids, write_obj round-trips counts") {
  CHECK_THROWS((void)extract_mesh([](const Vec3&) { return 1.0; }, 4, 0.5));
  auto density = [](const Vec3& p) { return p.norm() < 0.4 ? 1.0 : 0.0; };
  Mesh m = extract_mesh(density, 12, 0.5);
  auto path = std::filesystem::temp_directory_path() / "hav_sphere.obj";
  write_obj(path.string(), m);
  std::ifstream f(path);
  std::string line;
  long nv = 0, nf = 0;
  while (std::getline(f, line)) {
    if (line.rfind("v ", 0) == 0) ++nv;
    if (line.rfind("f ", 0) == 0) ++nf;
  }
  CHECK(nv == m.V.rows());
  CHECK(nf == m.F.rows());
  std::filesystem::remove(path);
}
