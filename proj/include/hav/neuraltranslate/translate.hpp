#pragma once

#include "hav/nn/layers.hpp"

#include <vector>

namespace hav::neuraltranslate {

using diff::Graph;
using diff::ParamList;
using diff::Rng;
using diff::Tensor;

// Orthonormal Haar synthesis. Sub-bands are stacked {4C,H,W}, grouped per
// color channel as (LL, LH, HL, HH); output is {C,2H,2W}. A constant image
// c corresponds to LL = 2c. The adjoint (= inverse) is the forward
// analysis, so the backward pass reuses the same butterfly.
Tensor haar_iwt(Graph& g, const Tensor& subbands);

struct TranslatorConfig {
  int cc = 8;        // rendered feature channels
  int res = 32;      // feature-map resolution
  int upsample = 2;  // output resolution factor (2 or 4)
  int base = 16;
  int down = 2;      // encoder stride-2 stages
};

// UNet-style translation: downsampling encoder, skip-connected decoder with
// per-scale linear RGB heads accumulated by upsample+add, final head
// predicting 4 wavelet sub-bands per color channel; output through sigmoid.
struct TranslatorNet {
  TranslatorConfig cfg;
  nn::Conv2d stem;
  std::vector<nn::Conv2d> enc;     // stride-2
  std::vector<nn::Conv2d> dec;     // after upsample2 (+skip concat)
  std::vector<nn::Conv2d> to_rgb;  // 1x1 per decoder scale
  std::vector<nn::Conv2d> extra;   // stages past the input resolution (k=4)
  std::vector<nn::Conv2d> extra_rgb;
  nn::Conv2d wavelet_head;         // 1x1 -> 12 sub-band channels

  static TranslatorNet make(Rng& rng, const TranslatorConfig& cfg);
  Tensor forward(Graph& g, const Tensor& feature_map) const; // {3,k*R,k*R}
  void collect(const std::string& prefix, ParamList& out) const;
};

// Strided conv stack to a scalar logit, with a hand-stitched input-gradient
// path built from tape ops so the R1 penalty stays differentiable in the
// discriminator parameters (activation masks are treated as locally
// constant).
struct Discriminator {
  std::vector<nn::Conv2d> convs; // stride-2 each
  nn::Linear head;
  int in_h = 0, in_w = 0, in_c = 3;

  // levels=0 degenerates to a single linear map (used by closed-form tests)
  static Discriminator make(Rng& rng, int res, int levels = 4, int base = 16);
  Tensor logit(Graph& g, const Tensor& img) const; // {1,1}
  // d logit / d img as a tape tensor {C,H,W}
  Tensor input_gradient(Graph& g, const Tensor& img) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct AdvLosses {
  Tensor generator;     // mean softplus(-D(fake))
  Tensor discriminator; // mean softplus(D(fake)) + mean softplus(-D(real)) + R1
  Tensor r1;            // (lambda_r1/2) * mean ||d D / d real||^2
};

// Non-saturating GAN losses with R1 on the real batch. The fake batch is
// detached inside the discriminator terms.
AdvLosses adv_losses(Graph& g, const Discriminator& disc,
                     const std::vector<Tensor>& real,
                     const std::vector<Tensor>& fake, double lambda_r1);

// L1 distance between multi-scale features of a fixed random frozen conv
// stack. A declared stand-in for a pretrained perceptual metric; not
// comparable to published perceptual scores.
struct PerceptualLite {
  nn::Conv2d c1, c2, c3;
  static PerceptualLite make(); // fixed internal seed
  Tensor distance(Graph& g, const Tensor& a, const Tensor& b) const;
};

} // namespace hav::neuraltranslate
