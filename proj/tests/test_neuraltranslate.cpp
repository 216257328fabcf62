#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hav/diffcore/adam.hpp"
#include "hav/diffcore/gradcheck.hpp"
#include "hav/neuraltranslate/translate.hpp"

#include <cmath>

using namespace hav;
using namespace hav::neuraltranslate;
using diff::Array;
using diff::Graph;
using diff::Rng;
using diff::Tensor;

namespace {

// forward Haar analysis, the independent oracle for the synthesis op
Array haar_fwt_oracle(const Array& img, int c, int h, int w) {
  int hh = h / 2, hw = w / 2;
  Array out = Array::Zero(long(4 * c) * hh * hw);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < hw; ++x) {
        auto p = [&](int dy, int dx) {
          return img[(long(ch) * h + 2 * y + dy) * w + 2 * x + dx];
        };
        long i = (long(y)) * hw + x;
        long plane = long(hh) * hw;
        out[(4 * ch + 0) * plane + i] = 0.5 * (p(0, 0) + p(0, 1) + p(1, 0) + p(1, 1));
        out[(4 * ch + 1) * plane + i] = 0.5 * (p(0, 0) - p(0, 1) + p(1, 0) - p(1, 1));
        out[(4 * ch + 2) * plane + i] = 0.5 * (p(0, 0) + p(0, 1) - p(1, 0) - p(1, 1));
        out[(4 * ch + 3) * plane + i] = 0.5 * (p(0, 0) - p(0, 1) - p(1, 0) + p(1, 1));
      }
  return out;
}

} // namespace

TEST_CASE("haar_iwt: pure LL of 2c synthesizes the constant image c") {
  Graph g(Graph::NoGrad);
  Array bands = Array::Zero(4 * 3 * 3);
  for (int i = 0; i < 9; ++i) bands[i] = 2.0 * 0.7; // LL plane of channel 0
  Tensor out = haar_iwt(g, Tensor::from({4, 3, 3}, bands));
  REQUIRE(out.shape() == diff::Shape{1, 6, 6});
  for (long i = 0; i < out.size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("haar synthesis inverts the analysis oracle both ways") {
  Rng rng(3);
  Graph g(Graph::NoGrad);
  int c = 3, h = 8, w = 8;
  Tensor img = nn::randn_tensor(rng, {c, h, w}, 1.0, false);
  Array bands = haar_fwt_oracle(img.values(), c, h, w);
  Tensor back = haar_iwt(g, Tensor::from({4 * c, h / 2, w / 2}, bands));
  CHECK((back.values() - img.values()).abs().maxCoeff() <= 1e-6);

  // IWT then FWT
  Tensor some_bands = nn::randn_tensor(rng, {4 * c, 4, 4}, 1.0, false);
  Tensor synth = haar_iwt(g, some_bands);
  Array analysed = haar_fwt_oracle(synth.values(), c, 8, 8);
  CHECK((analysed - some_bands.values()).abs().maxCoeff() <= 1e-6);

  // Parseval
  CHECK(synth.values().square().sum() ==
        doctest::Approx(some_bands.values().square().sum()).epsilon(1e-9));
}

TEST_CASE("translate: output contract, determinism, gradient to the features") {
  Rng rng(5);
  TranslatorConfig cfg;
  cfg.cc = 4;
  cfg.res = 8;
  cfg.upsample = 2;
  cfg.base = 4;
  cfg.down = 1;
  TranslatorNet net = TranslatorNet::make(rng, cfg);
  Tensor feat = nn::randn_tensor(rng, {4, 8, 8}, 0.5, true);

  Graph g(Graph::NoGrad);
  Tensor a = net.forward(g, feat);
  REQUIRE(a.shape() == diff::Shape{3, 16, 16});
  CHECK(a.values().minCoeff() >= 0.0);
  CHECK(a.values().maxCoeff() <= 1.0);
  Tensor b = net.forward(g, feat);
  CHECK((a.values() - b.values()).abs().maxCoeff() == 0.0);

  auto res = diff::grad_check("translate_input", {feat}, [&](Graph& gg) {
    return mean(gg, square(gg, net.forward(gg, feat)));
  });
  INFO(res.worst);
  CHECK(res.pass);

  Graph gg;
  Tensor out = net.forward(gg, feat);
  auto grads = gg.backward(mean(gg, square(gg, out)));
  CHECK(grads.dense(feat.id(), feat.size()).abs().sum() > 0.0);
}

TEST_CASE("translate: x4 factor path keeps the contract") {
  Rng rng(7);
  TranslatorConfig cfg;
  cfg.cc = 4;
  cfg.res = 8;
  cfg.upsample = 4;
  cfg.base = 4;
  cfg.down = 1;
  TranslatorNet net = TranslatorNet::make(rng, cfg);
  Graph g(Graph::NoGrad);
  Tensor out = net.forward(g, nn::randn_tensor(rng, {4, 8, 8}, 0.5, false));
  CHECK(out.shape() == diff::Shape{3, 32, 32});
}

TEST_CASE("adv_losses: zeroed discriminator gives ln 2 terms and zero R1") {
  Rng rng(9);
  Discriminator disc = Discriminator::make(rng, 8, 2, 4);
  for (auto& c : disc.convs) {
    c.W.values().setZero();
    c.b.values().setZero();
  }
  disc.head.W.values().setZero();
  disc.head.b.values().setZero();

  Graph g;
  Tensor real = nn::randn_tensor(rng, {3, 8, 8}, 0.5, false);
  Tensor fake = nn::randn_tensor(rng, {3, 8, 8}, 0.5, false);
  AdvLosses adv = adv_losses(g, disc, {real}, {fake}, 1.0);
  double ln2 = std::log(2.0);
  CHECK(adv.generator.value() == doctest::Approx(ln2).epsilon(1e-12));
  CHECK(adv.r1.value() == doctest::Approx(0.0));
  CHECK(adv.discriminator.value() == doctest::Approx(2 * ln2).epsilon(1e-12));
}

TEST_CASE("adv_losses: R1 of a linear discriminator is (lambda/2)||w||^2") {
  Rng rng(11);
  Discriminator disc = Discriminator::make(rng, 6, 0, 4); // pure linear
  Graph g;
  Tensor real = nn::randn_tensor(rng, {3, 6, 6}, 0.5, false);
  Tensor fake = nn::randn_tensor(rng, {3, 6, 6}, 0.5, false);
  double lambda = 0.7;
  AdvLosses adv = adv_losses(g, disc, {real}, {fake}, lambda);
  double wsq = disc.head.W.values().square().sum();
  CHECK(adv.r1.value() == doctest::Approx(0.5 * lambda * wsq).epsilon(1e-8));
}

TEST_CASE("adv_losses: one discriminator step improves a separable toy batch") {
  Rng rng(13);
  Discriminator disc = Discriminator::make(rng, 8, 2, 4);
  Tensor real = Tensor::full({3, 8, 8}, 0.85);
  Tensor fake = Tensor::full({3, 8, 8}, 0.15);
  diff::Adam opt(1e-2);

  double before;
  {
    Graph g;
    before = adv_losses(g, disc, {real}, {fake}, 0.1).discriminator.value();
  }
  for (int i = 0; i < 5; ++i) {
    Graph g;
    AdvLosses adv = adv_losses(g, disc, {real}, {fake}, 0.1);
    diff::ParamList params;
    disc.collect("d", params);
    opt.step(params, g.backward(adv.discriminator));
  }
  Graph g;
  double after = adv_losses(g, disc, {real}, {fake}, 0.1).discriminator.value();
  CHECK(after < before);
}

TEST_CASE("perceptual_lite: identity, symmetry, nonnegativity") {
  Rng rng(15);
  PerceptualLite p = PerceptualLite::make();
  Graph g(Graph::NoGrad);
  Tensor a = nn::randn_tensor(rng, {3, 16, 16}, 0.5, false);
  Tensor b = nn::randn_tensor(rng, {3, 16, 16}, 0.5, false);
  CHECK(p.distance(g, a, a).value() == 0.0);
  double dab = p.distance(g, a, b).value();
  double dba = p.distance(g, b, a).value();
  CHECK(dab == doctest::Approx(dba).epsilon(1e-15));
  CHECK(dab > 0.0);

  // frozen: a second instance computes the identical metric
  PerceptualLite q = PerceptualLite::make();
  CHECK(q.distance(g, a, b).value() == dab);
}
