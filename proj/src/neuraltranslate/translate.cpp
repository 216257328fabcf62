#include "hav/neuraltranslate/translate.hpp"

namespace hav::neuraltranslate {

using namespace diff;

namespace {

void haar_butterfly(const double* ll, const double* lh, const double* hl,
                    const double* hh, double* out, int h, int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long i = long(y) * w + x;
      double a = ll[i], b = lh[i], c = hl[i], d = hh[i];
      double* o = out + (long(2 * y) * 2 * w + 2 * x);
      o[0] = 0.5 * (a + b + c + d);
      o[1] = 0.5 * (a - b + c - d);
      o[2 * w] = 0.5 * (a + b - c - d);
      o[2 * w + 1] = 0.5 * (a - b - c + d);
    }
}

// adjoint: analysis butterfly, same coefficients
void haar_butterfly_adj(const double* img, double* ll, double* lh, double* hl,
                        double* hh, int h, int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long i = long(y) * w + x;
      const double* o = img + (long(2 * y) * 2 * w + 2 * x);
      double g00 = o[0], g01 = o[1], g10 = o[2 * w], g11 = o[2 * w + 1];
      ll[i] += 0.5 * (g00 + g01 + g10 + g11);
      lh[i] += 0.5 * (g00 - g01 + g10 - g11);
      hl[i] += 0.5 * (g00 + g01 - g10 - g11);
      hh[i] += 0.5 * (g00 - g01 - g10 + g11);
    }
}

} // namespace

Tensor haar_iwt(Graph& g, const Tensor& subbands) {
  check(subbands.rank() == 3 && subbands.shape()[0] % 4 == 0,
        "haar_iwt: need {4C,H,W} sub-bands");
  int c = subbands.shape()[0] / 4;
  int h = subbands.shape()[1], w = subbands.shape()[2];
  Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
  {
    const double* s = subbands.values().data();
    double* o = out.values().data();
    long plane = long(h) * w;
    for (int ch = 0; ch < c; ++ch)
      haar_butterfly(s + (4 * ch + 0) * plane, s + (4 * ch + 1) * plane,
                     s + (4 * ch + 2) * plane, s + (4 * ch + 3) * plane,
                     o + long(ch) * 4 * plane, h, w);
  }
  if (g.recording() && subbands.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(subbands);
    g.touch(out);
    auto sd = subbands.d, od = out.d;
    g.record([sd, od, c, h, w] {
      double* gs = grad_acc(sd).data();
      const double* go = od->grad.data();
      long plane = long(h) * w;
      for (int ch = 0; ch < c; ++ch)
        haar_butterfly_adj(go + long(ch) * 4 * plane, gs + (4 * ch + 0) * plane,
                           gs + (4 * ch + 1) * plane, gs + (4 * ch + 2) * plane,
                           gs + (4 * ch + 3) * plane, h, w);
    });
  }
  return out;
}

TranslatorNet TranslatorNet::make(Rng& rng, const TranslatorConfig& cfg) {
  check(cfg.upsample == 2 || cfg.upsample == 4, "translator: upsample 2 or 4");
  TranslatorNet t;
  t.cfg = cfg;
  t.stem = nn::Conv2d::make(rng, cfg.cc, cfg.base, 3, 1);
  int ch = cfg.base;
  std::vector<int> enc_ch{ch};
  for (int i = 0; i < cfg.down; ++i) {
    t.enc.push_back(nn::Conv2d::make(rng, ch, ch * 2, 3, 2));
    ch *= 2;
    enc_ch.push_back(ch);
  }
  for (int i = cfg.down - 1; i >= 0; --i) {
    // upsampled features + skip from the matching encoder scale
    t.dec.push_back(nn::Conv2d::make(rng, ch + enc_ch[i], enc_ch[i], 3, 1));
    ch = enc_ch[i];
    t.to_rgb.push_back(nn::Conv2d::make(rng, ch, 3, 1, 1));
  }
  if (cfg.upsample == 4) {
    t.extra.push_back(nn::Conv2d::make(rng, ch, ch, 3, 1));
    t.extra_rgb.push_back(nn::Conv2d::make(rng, ch, 3, 1, 1));
  }
  t.wavelet_head = nn::Conv2d::make(rng, ch, 12, 1, 1);
  return t;
}

Tensor TranslatorNet::forward(Graph& g, const Tensor& feature_map) const {
  check(feature_map.rank() == 3 && feature_map.shape()[0] == cfg.cc,
        "translator: feature map must be {cc,R,R}");
  Tensor h = lrelu(g, stem.forward(g, feature_map));
  std::vector<Tensor> skips{h};
  for (const auto& down : enc) {
    h = lrelu(g, down.forward(g, h));
    skips.push_back(h);
  }
  Tensor rgb_acc;
  for (size_t i = 0; i < dec.size(); ++i) {
    const Tensor& skip = skips[dec.size() - 1 - i];
    h = lrelu(g, dec[i].forward(g, concat_chan(g, upsample2(g, h), skip)));
    Tensor rgb = to_rgb[i].forward(g, h);
    rgb_acc = rgb_acc.valid() ? add(g, upsample2(g, rgb_acc), rgb) : rgb;
  }
  for (size_t i = 0; i < extra.size(); ++i) {
    h = lrelu(g, extra[i].forward(g, upsample2(g, h)));
    rgb_acc = add(g, upsample2(g, rgb_acc), extra_rgb[i].forward(g, h));
  }
  Tensor bands = wavelet_head.forward(g, h);
  Tensor detail = haar_iwt(g, bands);
  return sigmoid(g, add(g, upsample2(g, rgb_acc), detail));
}

void TranslatorNet::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem", out);
  for (size_t i = 0; i < enc.size(); ++i)
    enc[i].collect(prefix + ".enc" + std::to_string(i), out);
  for (size_t i = 0; i < dec.size(); ++i) {
    dec[i].collect(prefix + ".dec" + std::to_string(i), out);
    to_rgb[i].collect(prefix + ".rgb" + std::to_string(i), out);
  }
  for (size_t i = 0; i < extra.size(); ++i) {
    extra[i].collect(prefix + ".extra" + std::to_string(i), out);
    extra_rgb[i].collect(prefix + ".extra_rgb" + std::to_string(i), out);
  }
  wavelet_head.collect(prefix + ".wavelet", out);
}

Discriminator Discriminator::make(Rng& rng, int res, int levels, int base) {
  Discriminator d;
  d.in_h = d.in_w = res;
  int ch = 3;
  int r = res;
  for (int i = 0; i < levels; ++i) {
    int next = std::min(128, base << i);
    d.convs.push_back(nn::Conv2d::make(rng, ch, next, 3, 2));
    ch = next;
    r = (r + 1) / 2;
  }
  d.head = nn::Linear::make(rng, ch * r * r, 1);
  return d;
}

Tensor Discriminator::logit(Graph& g, const Tensor& img) const {
  Tensor h = img;
  for (const auto& c : convs) h = lrelu(g, c.forward(g, h));
  Tensor flat = reshape(g, h, {1, int(h.size())});
  return head.forward(g, flat);
}

Tensor Discriminator::input_gradient(Graph& g, const Tensor& img) const {
  // forward, keeping pre-activation slope masks as constants
  std::vector<Tensor> masks;
  std::vector<diff::Shape> shapes;
  Tensor h = img;
  for (const auto& c : convs) {
    shapes.push_back(h.shape());
    Tensor pre = c.forward(g, h);
    Array m = (pre.values() > 0.0)
                  .select(Array::Ones(pre.size()),
                          Array::Constant(pre.size(), 0.2));
    masks.push_back(Tensor::from(pre.shape(), std::move(m)));
    h = lrelu(g, pre);
  }
  // reverse sweep as tape ops: d logit / d h_last = head.W reshaped
  Tensor grad = reshape(g, head.W, h.shape());
  for (int i = int(convs.size()) - 1; i >= 0; --i) {
    grad = mul(g, grad, masks[i]);
    grad = conv2d_adjoint(g, grad, convs[i].W, convs[i].stride, 1,
                          shapes[i][1], shapes[i][2]);
  }
  return grad;
}

void Discriminator::collect(const std::string& prefix, ParamList& out) const {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].collect(prefix + ".conv" + std::to_string(i), out);
  head.collect(prefix + ".head", out);
}

AdvLosses adv_losses(Graph& g, const Discriminator& disc,
                     const std::vector<Tensor>& real,
                     const std::vector<Tensor>& fake, double lambda_r1) {
  check(!real.empty() && !fake.empty(), "adv_losses: empty batch");
  AdvLosses out;

  Tensor lg, ld_fake, ld_real, r1;
  for (const auto& f : fake) {
    Tensor t = softplus(g, neg(g, disc.logit(g, f)));
    lg = lg.valid() ? add(g, lg, t) : t;
    Tensor td = softplus(g, disc.logit(g, detach(f)));
    ld_fake = ld_fake.valid() ? add(g, ld_fake, td) : td;
  }
  for (const auto& r : real) {
    Tensor t = softplus(g, neg(g, disc.logit(g, r)));
    ld_real = ld_real.valid() ? add(g, ld_real, t) : t;
    Tensor gr = disc.input_gradient(g, r);
    Tensor sq = sum(g, square(g, gr));
    r1 = r1.valid() ? add(g, r1, sq) : sq;
  }
  out.generator = reshape(g, mul_scalar(g, lg, 1.0 / double(fake.size())), {1});
  out.r1 = reshape(g, mul_scalar(g, r1, 0.5 * lambda_r1 / double(real.size())), {1});
  Tensor ld = add(g, mul_scalar(g, ld_fake, 1.0 / double(fake.size())),
                  mul_scalar(g, ld_real, 1.0 / double(real.size())));
  out.discriminator = add(g, reshape(g, ld, {1}), out.r1);
  return out;
}

PerceptualLite PerceptualLite::make() {
  Rng rng(0xFEA7u);
  PerceptualLite p;
  p.c1 = nn::Conv2d::make(rng, 3, 8, 3, 1);
  p.c2 = nn::Conv2d::make(rng, 8, 16, 3, 1);
  p.c3 = nn::Conv2d::make(rng, 16, 16, 3, 1);
  for (Tensor* t : {&p.c1.W, &p.c1.b, &p.c2.W, &p.c2.b, &p.c3.W, &p.c3.b})
    t->d->requires_grad = false; // frozen
  return p;
}

Tensor PerceptualLite::distance(Graph& g, const Tensor& a, const Tensor& b) const {
  check(a.shape() == b.shape(), "perceptual_lite: image shapes differ");
  auto feats = [&](const Tensor& x) {
    std::vector<Tensor> out;
    Tensor h = lrelu(g, c1.forward(g, x));
    out.push_back(h);
    h = lrelu(g, c2.forward(g, avgpool2(g, h)));
    out.push_back(h);
    h = lrelu(g, c3.forward(g, avgpool2(g, h)));
    out.push_back(h);
    return out;
  };
  auto fa = feats(a);
  auto fb = feats(b);
  Tensor acc;
  for (size_t i = 0; i < fa.size(); ++i) {
    Tensor d = mean(g, abs_op(g, sub(g, fa[i], fb[i])));
    acc = acc.valid() ? add(g, acc, d) : d;
  }
  return mul_scalar(g, acc, 1.0 / double(fa.size()));
}

} // namespace hav::neuraltranslate
