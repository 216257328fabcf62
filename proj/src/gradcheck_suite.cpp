#include "hav/diffcore/gradcheck.hpp"
#include "hav/motionwarp/motionwarp.hpp"
#include "hav/neuraltranslate/translate.hpp"
#include "hav/planegen/planegen.hpp"
#include "hav/radiancefield/field.hpp"

#include <iostream>

namespace hav::diff {

// The library-wide suite behind the `gradcheck` CLI subcommand: every
// differentiable pathway on small seeded instances, central differences at
// eps 1e-5 against tolerance 1e-4, away from documented kinks.
GradCheckReport gradcheck_default_suite(bool verbose) {
  GradCheckReport report;
  auto run = [&](GradCheckResult r) {
    if (verbose)
      std::cout << (r.pass ? "pass " : "FAIL ") << r.name << "  max_rel_err "
                << r.max_rel_err << (r.pass ? "" : "  [" + r.worst + "]")
                << std::endl;
    report.results.push_back(std::move(r));
  };
  Rng rng(20240001);
  auto randn = [&rng](Shape s, double sd = 1.0) {
    return nn::randn_tensor(rng, std::move(s), sd);
  };

  { // dense layer
    Tensor x = randn({4, 5}), w = randn({5, 3}), b = randn({1, 3}, 0.1);
    run(grad_check("linear", {x, w, b}, [&](Graph& g) {
      return mean(g, square(g, add_rowvec(g, matmul(g, x, w), b)));
    }));
  }
  { // elementwise chain
    Tensor a = randn({12});
    Tensor b = randn({12});
    b.values() = b.values().sign() * (b.values().abs() + 0.5);
    run(grad_check("elementwise", {a, b}, [&](Graph& g) {
      Tensor h = sigmoid(g, divide(g, softplus(g, a), b));
      return sum(g, mul(g, h, exp_op(g, mul_scalar(g, a, 0.2))));
    }));
  }
  { // convolutions
    Tensor x = randn({2, 6, 6}), w = randn({3, 2, 3, 3});
    run(grad_check("conv2d", {x, w}, [&](Graph& g) {
      return mean(g, square(g, conv2d(g, x, w)));
    }));
    Tensor ws = randn({3, 2, 3, 3});
    run(grad_check("conv2d_stride2", {x, ws}, [&](Graph& g) {
      return mean(g, square(g, conv2d(g, x, ws, 2, 1)));
    }));
    Tensor y = randn({3, 3, 3});
    run(grad_check("conv2d_adjoint", {y, ws}, [&](Graph& g) {
      return mean(g, square(g, conv2d_adjoint(g, y, ws, 2, 1, 6, 6)));
    }));
    run(grad_check("pool_upsample", {x}, [&](Graph& g) {
      return mean(g, square(g, avgpool2(g, upsample2(g, x))));
    }));
    Tensor seed3 = randn({2, 2, 2, 2}), w3 = randn({2, 2, 4, 4, 4}, 0.4);
    run(grad_check("conv3d_transpose", {seed3, w3}, [&](Graph& g) {
      return mean(g, square(g, conv3d_transpose(g, seed3, w3, 2, 1)));
    }));
  }
  { // modulated convolution
    Tensor x = randn({2, 4, 4}), w = randn({3, 2, 3, 3});
    Tensor style = randn({2}, 0.3);
    style.values() += 1.2;
    run(grad_check("modulated_conv2d", {x, w, style}, [&](Graph& g) {
      return mean(g, square(g, modulated_conv2d(g, x, w, style, true)));
    }));
  }
  { // plane and volume samplers, positions away from nodes
    Tensor plane = randn({2, 5, 5});
    Array uvv(6);
    uvv << 0.31, 0.42, 0.77, 0.18, 0.52, 0.63;
    Tensor uv = Tensor::from({3, 2}, uvv, true);
    run(grad_check("bilinear_sample", {plane, uv}, [&](Graph& g) {
      return mean(g, square(g, bilinear_sample(g, plane, uv)));
    }));
    Tensor vol = randn({4, 4, 4});
    Array pv(6);
    pv << 0.33, 0.41, 0.56, 0.62, 0.29, 0.8;
    Tensor pts = Tensor::from({2, 3}, pv, true);
    run(grad_check("trilinear_sample", {vol, pts}, [&](Graph& g) {
      return mean(g, square(g, trilinear_sample(g, vol, pts)));
    }));
    Tensor pp = randn({3, 3}, 0.3);
    run(grad_check("posenc", {pp}, [&](Graph& g) {
      return mean(g, square(g, posenc(g, pp, 4, true)));
    }));
  }
  { // quadrature
    Tensor sigma = randn({2, 5});
    sigma.values() = sigma.values().abs() + 0.1;
    Tensor feat = randn({10, 3});
    Array dt = Array::Constant(10, 0.13);
    run(grad_check("ray_integrate", {sigma, feat}, [&](Graph& g) {
      auto [f, a] = ray_integrate(g, sigma, feat, dt);
      return add(g, mean(g, square(g, f)), mean(g, square(g, a)));
    }));
  }
  { // canonical field decoder, full plane path
    Rng drng(7);
    radiancefield::FieldConfig fcfg;
    fcfg.cp = 3;
    fcfg.cc = 3;
    fcfg.hidden = 12;
    fcfg.pe.bands = 2;
    auto dec = radiancefield::Decoder::make(drng, fcfg);
    planegen::FeaturePlanes planes;
    planes.front = randn({3, 6, 6}, 0.5);
    planes.side = randn({3, 6, 6}, 0.5);
    Array pv(6);
    pv << 0.21, -0.13, 0.37, -0.42, 0.11, 0.03;
    Tensor pts = Tensor::from({2, 3}, pv);
    run(grad_check("decoder", {planes.front, planes.side, dec.sigma_head.W,
                               dec.feat_head.W},
                   [&](Graph& g) {
                     auto s = radiancefield::query_canonical(g, dec, fcfg,
                                                             &planes, pts);
                     Tensor rgb = radiancefield::feature_to_rgb(g, dec, s.feat);
                     return add(g, mean(g, square(g, s.sigma)),
                                mean(g, square(g, rgb)));
                   }));
  }
  { // inverse-skinning warp through the weight volume
    Tensor wvol = Tensor::from(
        {8, 8, 8}, 0.5 + 0.3 * Array::Random(8 * 8 * 8).sin(), true);
    HeadPose pose;
    pose.rotation = Vec3(0.2, 0.1, -0.15);
    pose.translation = Vec3(0.04, -0.03, 0.06);
    Array pts(9);
    pts << 0.11, 0.22, -0.31, -0.42, 0.13, 0.27, 0.05, -0.17, 0.33;
    run(grad_check("warp", {wvol}, [&](Graph& g) {
      auto wb = motionwarp::warp_batch(g, wvol, pts, pose, {});
      return mean(g, square(g, wb.x_c));
    }));
  }
  { // weight volume generator (biases and the last stage)
    Rng wrng(9);
    auto wgen = motionwarp::WeightVolumeGenerator::make(wrng);
    run(grad_check("weight_volume_generator",
                   {wgen.b1, wgen.b2, wgen.b3, wgen.w3}, [&](Graph& g) {
                     return mean(g, square(g, wgen.forward(g)));
                   }));
  }
  { // embedding -> mapping -> modulated generator
    Rng prng(11);
    planegen::PlaneGenConfig pcfg;
    pcfg.res = 8;
    pcfg.cp = 3;
    pcfg.d_gamma = 4;
    pcfg.d_style = 6;
    pcfg.enc1 = 3;
    pcfg.enc2 = 4;
    pcfg.enc3 = 4;
    pcfg.map_hidden = 8;
    auto map = planegen::MappingNetwork::make(prng, pcfg.d_gamma + 6,
                                              pcfg.map_hidden, pcfg.d_style);
    auto gen = planegen::PlaneGenerator::make(prng, 7, pcfg);
    Tensor stack = nn::randn_tensor(prng, {7, 8, 8}, 0.5, false);
    Tensor gamma = randn({1, 4}, 0.5);
    HeadPose pose;
    pose.rotation = Vec3(0.1, 0.2, -0.1);
    run(grad_check("embedding_to_plane", {gamma}, [&](Graph& g) {
      Tensor wsv = map.forward(g, gamma, pose);
      return mean(g, square(g, gen.forward(g, stack, wsv)));
    }));
  }
  { // translator, haar synthesis included
    Rng trng(13);
    neuraltranslate::TranslatorConfig tcfg;
    tcfg.cc = 4;
    tcfg.res = 8;
    tcfg.upsample = 2;
    tcfg.base = 4;
    tcfg.down = 1;
    auto tnet = neuraltranslate::TranslatorNet::make(trng, tcfg);
    Tensor feat = randn({4, 8, 8}, 0.5);
    run(grad_check("translator", {feat, tnet.wavelet_head.W, tnet.stem.W},
                   [&](Graph& g) {
                     return mean(g, square(g, tnet.forward(g, feat)));
                   }));
  }
  { // R1 regularizer path: d penalty / d discriminator parameters
    Rng drng(15);
    auto disc = neuraltranslate::Discriminator::make(drng, 8, 2, 4);
    Tensor img = randn({3, 8, 8}, 0.5);
    img.d->requires_grad = false;
    run(grad_check("r1_path", {disc.head.W, disc.convs[0].W, disc.convs[1].W},
                   [&](Graph& g) {
                     Tensor gr = disc.input_gradient(g, img);
                     return sum(g, square(g, gr));
                   }));
  }
  { // haar synthesis
    Tensor bands = randn({4, 4, 4});
    run(grad_check("haar_iwt", {bands}, [&](Graph& g) {
      return mean(g, square(g, neuraltranslate::haar_iwt(g, bands)));
    }));
  }
  { // losses
    Tensor p = Tensor::from({6}, Array::LinSpaced(6, 0.15, 0.85), true);
    Array tv(6);
    tv << 1, 0, 1, 0, 1, 1;
    Tensor target = Tensor::from({6}, tv);
    run(grad_check("bce_mean", {p}, [&](Graph& g) {
      return bce_mean(g, p, target);
    }));
  }
  return report;
}

} // namespace hav::diff
