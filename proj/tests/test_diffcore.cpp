#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hav/diffcore/adam.hpp"
#include "hav/diffcore/gradcheck.hpp"
#include "hav/diffcore/ops.hpp"
#include "hav/diffcore/rng.hpp"

#include <cmath>

using namespace hav::diff;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, bool requires_grad = false,
                   double scale = 1.0) {
  Array v(shape_size(shape));
  for (long i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Independent oracle: direct 6-loop cross-correlation with zero padding.
Array conv2d_naive(const Array& x, int ci, int h, int w, const Array& wgt,
                   int co, int k, int stride, int pad, int oh, int ow) {
  Array out = Array::Zero(long(co) * oh * ow);
  for (int o = 0; o < co; ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int i = 0; i < ci; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride - pad + ky;
              int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x[(long(i) * h + iy) * w + ix] *
                     wgt[((long(o) * ci + i) * k + ky) * k + kx];
            }
        out[(long(o) * oh + oy) * ow + ox] = acc;
      }
  return out;
}

} // namespace

TEST_CASE("backward: sum gives all-ones gradient") {
  Rng rng(1);
  Tensor x = rand_tensor(rng, {3, 4}, true);
  Graph g;
  Tensor loss = sum(g, x);
  GradientMap grads = g.backward(loss);
  Array gx = grads.at(x.id()).values();
  for (long i = 0; i < gx.size(); ++i) CHECK(gx[i] == doctest::Approx(1.0));
}

TEST_CASE("backward: sum of squares gives 2x") {
  Array v(3);
  v << 1, 2, 3;
  Tensor x = Tensor::from({3}, v, true);
  Graph g;
  Tensor loss = sum(g, mul(g, x, x));
  GradientMap grads = g.backward(loss);
  Array gx = grads.at(x.id()).values();
  CHECK(gx[0] == doctest::Approx(2.0));
  CHECK(gx[1] == doctest::Approx(4.0));
  CHECK(gx[2] == doctest::Approx(6.0));
}

TEST_CASE("backward: non-scalar loss is rejected") {
  Tensor x = Tensor::zeros({2, 2}, true);
  Graph g;
  Tensor y = mul_scalar(g, x, 2.0);
  CHECK_THROWS_AS((void)g.backward(y), ContractError);
}

TEST_CASE("backward: unreachable leaf gets zero gradient") {
  Rng rng(2);
  Tensor x = rand_tensor(rng, {4}, true);
  Tensor y = rand_tensor(rng, {4}, true);
  Graph g;
  Tensor dead = mul(g, y, y); // recorded but not reachable from the loss
  (void)dead;
  Tensor loss = sum(g, x);
  GradientMap grads = g.backward(loss);
  CHECK(grads.dense(y.id(), 4).abs().maxCoeff() == 0.0);
}

TEST_CASE("backward: repeated calls produce identical results") {
  Rng rng(3);
  Tensor x = rand_tensor(rng, {5}, true);
  Graph g;
  Tensor loss = sum(g, mul(g, softplus(g, x), x));
  Array g1 = g.backward(loss).at(x.id()).values();
  Array g2 = g.backward(loss).at(x.id()).values();
  CHECK((g1 - g2).abs().maxCoeff() == 0.0);
}

TEST_CASE("gradcheck: random 3-layer composite") {
  Rng rng(7);
  Tensor x = rand_tensor(rng, {4, 6}, true);
  Tensor w1 = rand_tensor(rng, {6, 8}, true, 0.5);
  Tensor w2 = rand_tensor(rng, {8, 5}, true, 0.5);
  Tensor b = rand_tensor(rng, {1, 5}, true, 0.1);
  auto fn = [&](Graph& g) {
    Tensor h1 = softplus(g, matmul(g, x, w1));
    Tensor h2 = sigmoid(g, add_rowvec(g, matmul(g, h1, w2), b));
    return mean(g, square(g, h2));
  };
  auto res = grad_check("composite3", {x, w1, w2, b}, fn);
  INFO(res.worst);
  CHECK(res.pass);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck: linear layer passes, relu at exact kink is flagged") {
  Rng rng(11);
  Tensor x = rand_tensor(rng, {3, 4}, true);
  Tensor w = rand_tensor(rng, {4, 2}, true);
  auto linear = [&](Graph& g) { return sum(g, matmul(g, x, w)); };
  CHECK(grad_check("linear", {x, w}, linear).pass);

  Tensor z = Tensor::zeros({1}, true); // exactly at the kink
  auto kink = [&](Graph& g) { return sum(g, relu(g, z)); };
  auto res = grad_check("relu@0", {z}, kink);
  CHECK_FALSE(res.pass); // non-smooth point: excluded from the default suite
}

TEST_CASE("gradcheck: softplus density head at 0 passes") {
  Tensor z = Tensor::zeros({1}, true);
  auto fn = [&](Graph& g) { return sum(g, softplus(g, z)); };
  CHECK(grad_check("softplus@0", {z}, fn).pass);
}

TEST_CASE("gradcheck: elementwise and structural ops") {
  Rng rng(13);
  Tensor a = rand_tensor(rng, {2, 6}, true);
  Tensor b = rand_tensor(rng, {2, 6}, true, 0.5);
  // keep b away from 0 for divide
  b.values() = b.values().sign() * (b.values().abs() + 0.5);
  auto fn = [&](Graph& g) {
    Tensor d = divide(g, a, b);
    Tensor e = concat_cols(g, {slice_cols(g, d, 1, 3), exp_op(g, mul_scalar(g, a, 0.3))});
    Tensor f = lrelu(g, sub(g, e, add_scalar(g, e, 0.05)), 0.2);
    return mean(g, square(g, add(g, f, f)));
  };
  auto res = grad_check("elementwise", {a, b}, fn);
  INFO(res.worst);
  CHECK(res.pass);
}

TEST_CASE("gradcheck: sqrt/rsqrt/abs away from kinks") {
  Rng rng(17);
  Tensor a = rand_tensor(rng, {8}, true);
  a.values() = a.values().abs() + 0.5;
  auto fn = [&](Graph& g) {
    return sum(g, add(g, sqrt_op(g, a), rsqrt(g, abs_op(g, a))));
  };
  CHECK(grad_check("sqrt_rsqrt_abs", {a}, fn).pass);
}

TEST_CASE("gradcheck: scale_rows, row, to_chw") {
  Rng rng(19);
  Tensor x = rand_tensor(rng, {6, 3}, true);
  Tensor s = rand_tensor(rng, {6}, true);
  auto fn = [&](Graph& g) {
    Tensor y = scale_rows(g, x, s);
    Tensor img = to_chw(g, y, 2, 3);
    Tensor r0 = row(g, reshape(g, img, {3, 6}), 1);
    return mean(g, square(g, r0));
  };
  CHECK(grad_check("scale_rows_chw", {x, s}, fn).pass);
}

TEST_CASE("gradcheck: bce_mean") {
  Rng rng(23);
  Tensor p = Tensor::from({6}, Array::LinSpaced(6, 0.1, 0.9), true);
  Array t(6);
  t << 1, 0, 1, 0, 1, 1;
  Tensor target = Tensor::from({6}, t);
  auto fn = [&](Graph& g) { return bce_mean(g, p, target); };
  CHECK(grad_check("bce", {p}, fn).pass);
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces input") {
  Rng rng(29);
  Tensor x = rand_tensor(rng, {3, 5, 4});
  Array w = Array::Zero(3 * 3);
  // w[o,i,0,0] = (o==i)
  for (int o = 0; o < 3; ++o) w[o * 3 + o] = 1.0;
  Tensor wt = Tensor::from({3, 3, 1, 1}, w);
  Graph g(Graph::NoGrad);
  Tensor y = conv2d(g, x, wt);
  CHECK((y.values() - x.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("conv2d: 3x3 averaging kernel preserves constants in the interior") {
  Tensor x = Tensor::full({1, 6, 6}, 3.25);
  Tensor w = Tensor::from({1, 1, 3, 3}, Array::Constant(9, 1.0 / 9.0));
  Graph g(Graph::NoGrad);
  Tensor y = conv2d(g, x, w);
  for (int yy = 1; yy < 5; ++yy)
    for (int xx = 1; xx < 5; ++xx)
      CHECK(y.values()[yy * 6 + xx] == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("conv2d: matches the 6-loop oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 4; ++trial) {
    int ci = 1 + rng.uniform_int(8), co = 1 + rng.uniform_int(6);
    int h = 4 + rng.uniform_int(13), w = 4 + rng.uniform_int(13);
    int k = (trial % 2) ? 3 : 1;
    int stride = (trial == 3) ? 2 : 1;
    int pad = k / 2;
    Tensor x = rand_tensor(rng, {ci, h, w});
    Tensor wt = rand_tensor(rng, {co, ci, k, k});
    Graph g(Graph::NoGrad);
    Tensor y = conv2d(g, x, wt, stride, pad);
    int oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    Array ref = conv2d_naive(x.values(), ci, h, w, wt.values(), co, k, stride,
                             pad, oh, ow);
    REQUIRE(y.size() == ref.size());
    CHECK((y.values() - ref).abs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("conv2d: channel mismatch raises shape error") {
  Tensor x = Tensor::zeros({3, 4, 4});
  Tensor w = Tensor::zeros({2, 4, 3, 3});
  Graph g(Graph::NoGrad);
  CHECK_THROWS_AS((void)conv2d(g, x, w), ShapeError);
}

TEST_CASE("gradcheck: conv2d and conv2d_adjoint") {
  Rng rng(37);
  Tensor x = rand_tensor(rng, {2, 5, 5}, true);
  Tensor w = rand_tensor(rng, {3, 2, 3, 3}, true);
  auto fn = [&](Graph& g) { return mean(g, square(g, conv2d(g, x, w))); };
  CHECK(grad_check("conv2d", {x, w}, fn).pass);

  Tensor x2 = rand_tensor(rng, {2, 6, 6}, true);
  Tensor w2 = rand_tensor(rng, {3, 2, 3, 3}, true);
  auto fns = [&](Graph& g) {
    return mean(g, square(g, conv2d(g, x2, w2, 2, 1)));
  };
  CHECK(grad_check("conv2d_s2", {x2, w2}, fns).pass);

  Tensor y = rand_tensor(rng, {3, 3, 3}, true);
  auto fna = [&](Graph& g) {
    return mean(g, square(g, conv2d_adjoint(g, y, w2, 2, 1, 6, 6)));
  };
  CHECK(grad_check("conv2d_adjoint", {y, w2}, fna).pass);
}

TEST_CASE("conv2d_adjoint is the true adjoint of conv2d") {
  // <conv(x), y> == <x, adjoint(y)> for random x, y
  Rng rng(41);
  Tensor x = rand_tensor(rng, {2, 6, 6});
  Tensor w = rand_tensor(rng, {3, 2, 3, 3});
  Graph g(Graph::NoGrad);
  Tensor cx = conv2d(g, x, w, 2, 1);
  Tensor y = rand_tensor(rng, cx.shape());
  Tensor ay = conv2d_adjoint(g, y, w, 2, 1, 6, 6);
  double lhs = (cx.values() * y.values()).sum();
  double rhs = (x.values() * ay.values()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gradcheck: pooling, upsample, conv3d_transpose") {
  Rng rng(43);
  Tensor x = rand_tensor(rng, {2, 4, 4}, true);
  auto fn = [&](Graph& g) {
    return mean(g, square(g, avgpool2(g, upsample2(g, x))));
  };
  CHECK(grad_check("pool_upsample", {x}, fn).pass);

  Tensor seed = rand_tensor(rng, {3, 2, 2, 2}, true);
  Tensor w3 = rand_tensor(rng, {3, 2, 4, 4, 4}, true, 0.3);
  auto fn3 = [&](Graph& g) {
    return mean(g, square(g, conv3d_transpose(g, seed, w3, 2, 1)));
  };
  CHECK(grad_check("conv3d_transpose", {seed, w3}, fn3).pass);
}

TEST_CASE("conv3d_transpose doubles extents with k=4,s=2,p=1") {
  Tensor x = Tensor::zeros({1, 2, 2, 2});
  Tensor w = Tensor::zeros({1, 1, 4, 4, 4});
  Graph g(Graph::NoGrad);
  Tensor y = conv3d_transpose(g, x, w, 2, 1);
  CHECK(y.shape() == Shape{1, 4, 4, 4});
}

TEST_CASE("modulated_conv2d: all-ones style without demodulation equals conv2d") {
  Rng rng(47);
  Tensor x = rand_tensor(rng, {3, 6, 6});
  Tensor w = rand_tensor(rng, {4, 3, 3, 3});
  Tensor style = Tensor::full({3}, 1.0);
  Graph g(Graph::NoGrad);
  Tensor a = modulated_conv2d(g, x, w, style, false);
  Tensor b = conv2d(g, x, w);
  CHECK((a.values() - b.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("modulated_conv2d: demodulation normalizes a single-tap filter") {
  // one nonzero weight w -> scaled weight magnitude w*s/sqrt((w*s)^2+eps) ~ 1
  for (double wv : {0.05, 1.0, -40.0}) {
    Array w = Array::Zero(9);
    w[4] = wv;
    Tensor wt = Tensor::from({1, 1, 3, 3}, w);
    Array x = Array::Zero(9);
    x[4] = 1.0; // unit impulse: output center = effective weight
    Tensor xt = Tensor::from({1, 3, 3}, x);
    Tensor style = Tensor::full({1}, 1.0);
    Graph g(Graph::NoGrad);
    Tensor y = modulated_conv2d(g, xt, wt, style, true);
    double expect = wv / std::sqrt(wv * wv + 1e-8);
    CHECK(y.values()[4] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(y.values()[4]) <= 1.0);
    CHECK(std::abs(y.values()[4]) ==
          doctest::Approx(1.0).epsilon(std::abs(wv) < 0.1 ? 2e-3 : 1e-6));
  }
}

TEST_CASE("modulated_conv2d: style length mismatch raises shape error") {
  Tensor x = Tensor::zeros({3, 4, 4});
  Tensor w = Tensor::zeros({2, 3, 3, 3});
  Tensor style = Tensor::full({2}, 1.0);
  Graph g(Graph::NoGrad);
  CHECK_THROWS_AS((void)modulated_conv2d(g, x, w, style, true), ShapeError);
}

TEST_CASE("gradcheck: modulated_conv2d wrt style, weight and input") {
  Rng rng(53);
  Tensor x = rand_tensor(rng, {2, 4, 4}, true);
  Tensor w = rand_tensor(rng, {3, 2, 3, 3}, true);
  Tensor style = rand_tensor(rng, {2}, true);
  style.values() += 1.5; // keep modulation well-conditioned
  auto fn = [&](Graph& g) {
    return mean(g, square(g, modulated_conv2d(g, x, w, style, true)));
  };
  auto res = grad_check("modconv", {x, w, style}, fn);
  INFO(res.worst);
  CHECK(res.pass);
}

TEST_CASE("bilinear_sample: exact at nodes, mean at cell centers, zero outside") {
  Rng rng(59);
  int h = 4, w = 5, c = 2;
  Tensor plane = rand_tensor(rng, {c, h, w});
  Graph g(Graph::NoGrad);

  // node (r,cc) at u=(cc+0.5)/W, v=(r+0.5)/H
  Tensor at_node = bilinear_sample_point(g, plane, (2 + 0.5) / w, (1 + 0.5) / h);
  CHECK(at_node.values()[0] ==
        doctest::Approx(plane.values()[(0 * h + 1) * w + 2]).epsilon(1e-12));
  CHECK(at_node.values()[1] ==
        doctest::Approx(plane.values()[(1 * h + 1) * w + 2]).epsilon(1e-12));

  // center of 4 nodes
  Tensor at_center = bilinear_sample_point(g, plane, 2.0 / w, 2.0 / h);
  for (int ch = 0; ch < c; ++ch) {
    double m = 0.25 * (plane.values()[(ch * h + 1) * w + 1] +
                       plane.values()[(ch * h + 1) * w + 2] +
                       plane.values()[(ch * h + 2) * w + 1] +
                       plane.values()[(ch * h + 2) * w + 2]);
    CHECK(at_center.values()[ch] == doctest::Approx(m).epsilon(1e-12));
  }

  Tensor outside = bilinear_sample_point(g, plane, -0.5, 0.5);
  CHECK(outside.values().abs().maxCoeff() == 0.0);
}

TEST_CASE("bilinear_sample: linear along grid axes") {
  Rng rng(61);
  int h = 4, w = 4;
  Tensor plane = rand_tensor(rng, {1, h, w});
  Graph g(Graph::NoGrad);
  // along u between nodes (1,1) and (1,2)
  double u0 = 1.5 / w, u1 = 2.5 / w, v = 1.5 / h;
  double f0 = bilinear_sample_point(g, plane, u0, v).values()[0];
  double f1 = bilinear_sample_point(g, plane, u1, v).values()[0];
  for (double a : {0.25, 0.5, 0.75}) {
    double fa =
        bilinear_sample_point(g, plane, u0 + a * (u1 - u0), v).values()[0];
    CHECK(fa == doctest::Approx((1 - a) * f0 + a * f1).epsilon(1e-12));
  }
}

TEST_CASE("trilinear_sample: node, cell center, constant volume") {
  Rng rng(67);
  int d = 4;
  Tensor vol = rand_tensor(rng, {d, d, d});
  auto at = [&](int i2, int i1, int i0) {
    return vol.values()[(long(i2) * d + i1) * d + i0];
  };
  double node = trilinear_sample_point(vol, (1 + 0.5) / d, (2 + 0.5) / d, (3 + 0.5) / d);
  CHECK(node == doctest::Approx(at(3, 2, 1)).epsilon(1e-12));

  double center = trilinear_sample_point(vol, 2.0 / d, 2.0 / d, 2.0 / d);
  double m = 0.0;
  for (int dz = 1; dz <= 2; ++dz)
    for (int dy = 1; dy <= 2; ++dy)
      for (int dx = 1; dx <= 2; ++dx) m += at(dz, dy, dx);
  CHECK(center == doctest::Approx(m / 8.0).epsilon(1e-12));

  Tensor cvol = Tensor::full({d, d, d}, 0.77);
  Rng prng(68);
  for (int t = 0; t < 50; ++t) {
    double v = trilinear_sample_point(cvol, prng.uniform(), prng.uniform(),
                                      prng.uniform());
    CHECK(v == doctest::Approx(0.77).epsilon(1e-12));
  }
  CHECK(trilinear_sample_point(cvol, 1.2, 0.5, 0.5) == 0.0);
}

TEST_CASE("gradcheck: bilinear/trilinear in values and positions") {
  Rng rng(71);
  Tensor plane = rand_tensor(rng, {2, 5, 5}, true);
  Array uvv(6);
  uvv << 0.31, 0.42, 0.77, 0.18, 0.52, 0.63; // cell-interior points
  Tensor uv = Tensor::from({3, 2}, uvv, true);
  auto fn = [&](Graph& g) {
    return mean(g, square(g, bilinear_sample(g, plane, uv)));
  };
  CHECK(grad_check("bilinear", {plane, uv}, fn).pass);

  Tensor vol = rand_tensor(rng, {4, 4, 4}, true);
  Array pv(6);
  pv << 0.33, 0.41, 0.56, 0.62, 0.29, 0.8;
  Tensor pts = Tensor::from({2, 3}, pv, true);
  auto fn3 = [&](Graph& g) {
    return mean(g, square(g, trilinear_sample(g, vol, pts)));
  };
  CHECK(grad_check("trilinear", {vol, pts}, fn3).pass);
}

TEST_CASE("gradcheck: posenc in positions") {
  Rng rng(73);
  Tensor pts = rand_tensor(rng, {3, 3}, true, 0.3);
  auto fn = [&](Graph& g) {
    return mean(g, square(g, posenc(g, pts, 4, true)));
  };
  CHECK(grad_check("posenc", {pts}, fn).pass);
}

TEST_CASE("gradcheck: ray_integrate in sigma and features") {
  Rng rng(79);
  Tensor sigma = rand_tensor(rng, {2, 5}, true);
  sigma.values() = sigma.values().abs() + 0.1;
  Tensor feat = rand_tensor(rng, {10, 3}, true);
  Array dt = Array::Constant(10, 0.13);
  auto fn = [&](Graph& g) {
    auto [f, a] = ray_integrate(g, sigma, feat, dt);
    return add(g, mean(g, square(g, f)), mean(g, square(g, a)));
  };
  auto res = grad_check("ray_integrate", {sigma, feat}, fn);
  INFO(res.worst);
  CHECK(res.pass);
}

TEST_CASE("ray_integrate: opaque first sample dominates") {
  int s = 4;
  Array sv = Array::Zero(s);
  sv[0] = 50.0 / 0.5; // sigma*dt = 50
  Tensor sigma = Tensor::from({1, s}, sv);
  Array fv = Array::Zero(s * 2);
  fv[0] = 0.3;
  fv[1] = -1.2;
  fv[2] = 9.0; // later samples, should be shadowed
  Tensor feat = Tensor::from({s, 2}, fv);
  Array dt = Array::Constant(s, 0.5);
  Graph g(Graph::NoGrad);
  auto [f, a] = ray_integrate(g, sigma, feat, dt);
  CHECK(f.values()[0] == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(f.values()[1] == doctest::Approx(-1.2).epsilon(1e-6));
  CHECK(a.values()[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("adam: converges on a quadratic") {
  Tensor x = Tensor::from({2}, (Array(2) << 5.0, -3.0).finished(), true);
  Adam opt(0.1);
  ParamList params{{"x", x}};
  for (int i = 0; i < 300; ++i) {
    Graph g;
    Tensor loss = sum(g, square(g, x));
    opt.step(params, g.backward(loss));
  }
  CHECK(x.values().abs().maxCoeff() < 1e-2);
}

TEST_CASE("rng: save/load state resumes the identical stream") {
  Rng a(42);
  for (int i = 0; i < 7; ++i) (void)a.normal();
  std::string st = a.save_state();
  Rng b;
  b.load_state(st);
  for (int i = 0; i < 20; ++i) CHECK(a.normal() == b.normal());
}
