#pragma once

#include "hav/diffcore/graph.hpp"

#include <utility>
#include <vector>

namespace hav::diff {

// Every op is functional: it returns a fresh tensor and, when any input
// carries gradient, appends one backward record to the graph. Matrices are
// shape {rows, cols}; image-like tensors are {C, H, W}; conv weights are
// {Cout, Cin, k, k}.

// ---- structural ----
Tensor reshape(Graph& g, const Tensor& x, Shape shape);
Tensor concat_cols(Graph& g, const std::vector<Tensor>& xs);
Tensor slice_cols(Graph& g, const Tensor& x, int begin, int len);
Tensor row(Graph& g, const Tensor& x, int i);          // {N,C} -> {1,C}
Tensor to_chw(Graph& g, const Tensor& x, int h, int w); // {H*W,C} -> {C,H,W}
Tensor detach(const Tensor& x);                          // constant copy

// ---- elementwise ----
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor divide(Graph& g, const Tensor& a, const Tensor& b);
Tensor add_scalar(Graph& g, const Tensor& a, double s);
Tensor mul_scalar(Graph& g, const Tensor& a, double s);
Tensor neg(Graph& g, const Tensor& a);
Tensor square(Graph& g, const Tensor& a);
Tensor sqrt_op(Graph& g, const Tensor& a);
Tensor rsqrt(Graph& g, const Tensor& a);
Tensor exp_op(Graph& g, const Tensor& a);
Tensor abs_op(Graph& g, const Tensor& a);   // kink at 0
Tensor relu(Graph& g, const Tensor& a);     // kink at 0
Tensor lrelu(Graph& g, const Tensor& a, double slope = 0.2);
Tensor softplus(Graph& g, const Tensor& a);
Tensor sigmoid(Graph& g, const Tensor& a);

// ---- reductions / losses ----
Tensor sum(Graph& g, const Tensor& a);   // -> scalar {1}
Tensor mean(Graph& g, const Tensor& a);  // -> scalar {1}
// Mean binary cross entropy; predictions clamped to [1e-7, 1-1e-7].
Tensor bce_mean(Graph& g, const Tensor& pred, const Tensor& target);

// ---- linear algebra ----
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);     // {m,k}x{k,n}
Tensor add_rowvec(Graph& g, const Tensor& x, const Tensor& b); // {N,C}+{1,C}
Tensor scale_rows(Graph& g, const Tensor& x, const Tensor& s); // {N,C}*{N}
Tensor repeat_row(Graph& g, const Tensor& x, int n);           // {1,C}->{N,C}
// Rows of x land at the given indices of an {n, C} zero tensor.
Tensor scatter_rows(Graph& g, const Tensor& x, const std::vector<int>& idx,
                    int n);
// bias {C} broadcast over the trailing dims of {C, ...}
Tensor add_channel_bias(Graph& g, const Tensor& x, const Tensor& b);
Tensor concat_chan(Graph& g, const Tensor& a, const Tensor& b); // {Ca+Cb,H,W}

// ---- convolution family ----
// Cross-correlation with zero padding: odd k, pad = k/2 preserves H,W.
Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, int stride = 1,
              int pad = -1);
// Adjoint of conv2d in its input argument (transposed convolution):
// maps {Cout,H',W'} back to {Cin,H,W} under the same weight/stride/pad.
Tensor conv2d_adjoint(Graph& g, const Tensor& y, const Tensor& w, int stride,
                      int pad, int out_h, int out_w);
Tensor avgpool2(Graph& g, const Tensor& x);
Tensor upsample2(Graph& g, const Tensor& x); // nearest, x2

// Weight: {Cin, Cout, k, k, k}; output extent = stride*D with k=2*stride,
// pad=stride/2... extents follow the usual transposed-conv formula
// (D-1)*stride - 2*pad + k.
Tensor conv3d_transpose(Graph& g, const Tensor& x, const Tensor& w,
                        int stride, int pad);

// ---- kernel modulation ----
Tensor scale_weight_in(Graph& g, const Tensor& w, const Tensor& style);
Tensor scale_weight_out(Graph& g, const Tensor& w, const Tensor& d);
Tensor filter_sqnorm(Graph& g, const Tensor& w); // -> {Cout}
// Per-input-channel kernel modulation, optional per-filter demodulation
// (L2 renorm with eps inside the square root), then conv2d.
Tensor modulated_conv2d(Graph& g, const Tensor& x, const Tensor& w,
                        const Tensor& style, bool demodulate,
                        double eps = 1e-8, int stride = 1, int pad = -1);

// ---- grid sampling ----
// Pixel-center bilinear interpolation over a {C,H,W} plane. uv is {N,2} in
// [0,1]^2 with u along width and v along height measured from row 0; node
// (r,c) sits at ((c+0.5)/W, (r+0.5)/H). Queries outside [0,1]^2 yield zero
// features (and zero gradient); inside, missing zero-pad neighbours blend
// toward zero. Differentiable in both the plane and uv.
Tensor bilinear_sample(Graph& g, const Tensor& plane, const Tensor& uv);
// 3D analogue over a {D2,D1,D0} volume indexed [i2][i1][i0]; pts is {N,3}
// holding (p0,p1,p2) in [0,1]^3 with p0 along the fastest axis. Outside the
// unit cube the sample is 0. Returns {N}.
Tensor trilinear_sample(Graph& g, const Tensor& vol, const Tensor& pts);

// Single-point conveniences.
Tensor bilinear_sample_point(Graph& g, const Tensor& plane, double u, double v);
double trilinear_sample_point(const Tensor& vol, double p0, double p1, double p2);

// ---- positional encoding ----
// {N,3} -> {N, 3*2*L (+3 raw)}: [sin(2^i pi x), cos(2^i pi x)] per axis.
Tensor posenc(Graph& g, const Tensor& pts, int bands, bool include_raw);
int posenc_dim(int bands, bool include_raw);

// ---- emission-absorption quadrature ----
// sigma {R,S}, feat {R*S,C}, dt {R,S} positive segment lengths (constant).
// alpha_i = 1-exp(-sigma_i dt_i), T_i = prod_{j<i}(1-alpha_j),
// out_feat = sum_i T_i alpha_i feat_i, out_alpha = sum_i T_i alpha_i.
// No background term is composited here.
std::pair<Tensor, Tensor> ray_integrate(Graph& g, const Tensor& sigma,
                                        const Tensor& feat, const Array& dt);

} // namespace hav::diff
