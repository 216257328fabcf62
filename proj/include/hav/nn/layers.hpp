#pragma once

#include "hav/diffcore/adam.hpp"
#include "hav/diffcore/ops.hpp"
#include "hav/diffcore/rng.hpp"

#include <string>

namespace hav::nn {

using diff::Graph;
using diff::ParamList;
using diff::Rng;
using diff::Shape;
using diff::Tensor;

inline Tensor randn_tensor(Rng& rng, Shape shape, double stddev,
                           bool requires_grad = true) {
  diff::Array v(diff::shape_size(shape));
  for (long i = 0; i < v.size(); ++i) v[i] = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

struct Linear {
  Tensor W; // {in, out}
  Tensor b; // {1, out}

  static Linear make(Rng& rng, int in, int out, double bias_init = 0.0) {
    Linear l;
    l.W = randn_tensor(rng, {in, out}, std::sqrt(2.0 / in));
    l.b = Tensor::from({1, out}, diff::Array::Constant(out, bias_init), true);
    return l;
  }

  Tensor forward(Graph& g, const Tensor& x) const {
    return add_rowvec(g, matmul(g, x, W), b);
  }

  void collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".W", W});
    out.push_back({prefix + ".b", b});
  }
};

struct Conv2d {
  Tensor W; // {Co, Ci, k, k}
  Tensor b; // {Co}
  int stride = 1;

  static Conv2d make(Rng& rng, int ci, int co, int k, int stride = 1) {
    Conv2d c;
    c.W = randn_tensor(rng, {co, ci, k, k}, std::sqrt(2.0 / (ci * k * k)));
    c.b = Tensor::zeros({co}, true);
    c.stride = stride;
    return c;
  }

  Tensor forward(Graph& g, const Tensor& x) const {
    return add_channel_bias(g, conv2d(g, x, W, stride), b);
  }

  void collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".W", W});
    out.push_back({prefix + ".b", b});
  }
};

// Style-modulated convolution: a per-layer affine maps the shared style
// vector to per-input-channel gains (bias starts at 1 so the initial state
// is a plain convolution), demodulation renormalizes each output filter.
struct ModConv2d {
  Tensor W; // {Co, Ci, k, k}
  Tensor b; // {Co}
  Linear affine;
  bool demodulate = true;

  static ModConv2d make(Rng& rng, int ci, int co, int k, int style_dim) {
    ModConv2d c;
    c.W = randn_tensor(rng, {co, ci, k, k}, std::sqrt(2.0 / (ci * k * k)));
    c.b = Tensor::zeros({co}, true);
    c.affine = Linear::make(rng, style_dim, ci, 1.0);
    c.affine.W.values() *= 0.1; // start close to identity modulation
    return c;
  }

  Tensor forward(Graph& g, const Tensor& x, const Tensor& wstyle) const {
    Tensor style = reshape(g, affine.forward(g, wstyle), {W.shape()[1]});
    return add_channel_bias(g, modulated_conv2d(g, x, W, style, demodulate), b);
  }

  void collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".W", W});
    out.push_back({prefix + ".b", b});
    affine.collect(prefix + ".affine", out);
  }
};

} // namespace hav::nn
