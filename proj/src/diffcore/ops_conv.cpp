#include "hav/diffcore/ops.hpp"

namespace hav::diff {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

int conv_out(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

// Columns: {H'*W', Cin*k*k}; row r = output pixel, cols = receptive field.
MatRM im2col(const double* x, int ci, int h, int w, int k, int s, int p,
             int oh, int ow) {
  MatRM cols = MatRM::Zero(long(oh) * ow, long(ci) * k * k);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      long r = long(oy) * ow + ox;
      for (int i = 0; i < ci; ++i)
        for (int ky = 0; ky < k; ++ky) {
          int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = ox * s - p + kx;
            if (ix < 0 || ix >= w) continue;
            cols(r, (long(i) * k + ky) * k + kx) = x[(long(i) * h + iy) * w + ix];
          }
        }
    }
  return cols;
}

// Adjoint scatter of im2col.
void col2im_add(const MatRM& cols, double* x, int ci, int h, int w, int k,
                int s, int p, int oh, int ow) {
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      long r = long(oy) * ow + ox;
      for (int i = 0; i < ci; ++i)
        for (int ky = 0; ky < k; ++ky) {
          int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = ox * s - p + kx;
            if (ix < 0 || ix >= w) continue;
            x[(long(i) * h + iy) * w + ix] += cols(r, (long(i) * k + ky) * k + kx);
          }
        }
    }
}

struct ConvDims {
  int ci, h, w, co, k, s, p, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  check(x.rank() == 3, "conv2d: input must be {C,H,W}");
  check(w.rank() == 4 && w.shape()[2] == w.shape()[3],
        "conv2d: weight must be {Cout,Cin,k,k}");
  ConvDims d;
  d.ci = x.shape()[0];
  d.h = x.shape()[1];
  d.w = x.shape()[2];
  d.co = w.shape()[0];
  d.k = w.shape()[2];
  check(d.k % 2 == 1, "conv2d: kernel size must be odd");
  check(w.shape()[1] == d.ci, "conv2d: channel mismatch, input " +
                                  std::to_string(d.ci) + " vs weight " +
                                  std::to_string(w.shape()[1]));
  d.s = stride;
  d.p = (pad < 0) ? d.k / 2 : pad;
  d.oh = conv_out(d.h, d.k, d.s, d.p);
  d.ow = conv_out(d.w, d.k, d.s, d.p);
  check(d.oh > 0 && d.ow > 0, "conv2d: empty output");
  return d;
}

} // namespace

Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, int stride, int pad) {
  ConvDims d = conv_dims(x, w, stride, pad);
  MatRM cols = im2col(x.values().data(), d.ci, d.h, d.w, d.k, d.s, d.p, d.oh, d.ow);
  CMapM wm(w.values().data(), d.co, long(d.ci) * d.k * d.k);
  Tensor out = Tensor::zeros({d.co, d.oh, d.ow});
  // {H'W', Co} staged, then permuted to {Co,H',W'}
  MatRM om = cols * wm.transpose();
  {
    double* dst = out.values().data();
    for (long rpix = 0; rpix < long(d.oh) * d.ow; ++rpix)
      for (int o = 0; o < d.co; ++o) dst[long(o) * d.oh * d.ow + rpix] = om(rpix, o);
  }
  if (g.recording() && (x.needs_grad() || w.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(w);
    g.touch(out);
    auto xd = x.d, wd = w.d, od = out.d;
    g.record([xd, wd, od, d] {
      long npix = long(d.oh) * d.ow;
      MatRM go(npix, d.co);
      const double* gsrc = od->grad.data();
      for (long rpix = 0; rpix < npix; ++rpix)
        for (int o = 0; o < d.co; ++o) go(rpix, o) = gsrc[long(o) * npix + rpix];
      CMapM wm(wd->values.data(), d.co, long(d.ci) * d.k * d.k);
      if (wd->requires_grad || wd->needs_grad) {
        MatRM cols = im2col(xd->values.data(), d.ci, d.h, d.w, d.k, d.s, d.p,
                            d.oh, d.ow);
        MapM gw(grad_acc(wd).data(), d.co, long(d.ci) * d.k * d.k);
        gw.noalias() += go.transpose() * cols;
      }
      if (xd->requires_grad || xd->needs_grad) {
        MatRM gcols = go * wm;
        col2im_add(gcols, grad_acc(xd).data(), d.ci, d.h, d.w, d.k, d.s, d.p,
                   d.oh, d.ow);
      }
    });
  }
  return out;
}

Tensor conv2d_adjoint(Graph& g, const Tensor& y, const Tensor& w, int stride,
                      int pad, int out_h, int out_w) {
  check(y.rank() == 3, "conv2d_adjoint: input must be {Cout,H',W'}");
  check(w.rank() == 4, "conv2d_adjoint: weight must be {Cout,Cin,k,k}");
  ConvDims d;
  d.co = w.shape()[0];
  d.ci = w.shape()[1];
  d.k = w.shape()[2];
  d.s = stride;
  d.p = (pad < 0) ? d.k / 2 : pad;
  d.h = out_h;
  d.w = out_w;
  d.oh = y.shape()[1];
  d.ow = y.shape()[2];
  check(y.shape()[0] == d.co, "conv2d_adjoint: channel mismatch");
  check(conv_out(d.h, d.k, d.s, d.p) == d.oh &&
            conv_out(d.w, d.k, d.s, d.p) == d.ow,
        "conv2d_adjoint: extents inconsistent with stride/pad");

  long npix = long(d.oh) * d.ow;
  MatRM ym(npix, d.co);
  {
    const double* src = y.values().data();
    for (long rpix = 0; rpix < npix; ++rpix)
      for (int o = 0; o < d.co; ++o) ym(rpix, o) = src[long(o) * npix + rpix];
  }
  CMapM wm(w.values().data(), d.co, long(d.ci) * d.k * d.k);
  Tensor out = Tensor::zeros({d.ci, d.h, d.w});
  MatRM cols = ym * wm;
  col2im_add(cols, out.values().data(), d.ci, d.h, d.w, d.k, d.s, d.p, d.oh, d.ow);

  if (g.recording() && (y.needs_grad() || w.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(y);
    g.touch(w);
    g.touch(out);
    auto yd = y.d, wd = w.d, od = out.d;
    g.record([yd, wd, od, d, npix] {
      MatRM gcols = im2col(od->grad.data(), d.ci, d.h, d.w, d.k, d.s, d.p,
                           d.oh, d.ow);
      if (yd->requires_grad || yd->needs_grad) {
        CMapM wm(wd->values.data(), d.co, long(d.ci) * d.k * d.k);
        MatRM gy = gcols * wm.transpose();
        double* dst = grad_acc(yd).data();
        for (long rpix = 0; rpix < npix; ++rpix)
          for (int o = 0; o < d.co; ++o) dst[long(o) * npix + rpix] += gy(rpix, o);
      }
      if (wd->requires_grad || wd->needs_grad) {
        MatRM ym(npix, d.co);
        const double* src = yd->values.data();
        for (long rpix = 0; rpix < npix; ++rpix)
          for (int o = 0; o < d.co; ++o) ym(rpix, o) = src[long(o) * npix + rpix];
        MapM gw(grad_acc(wd).data(), d.co, long(d.ci) * d.k * d.k);
        gw.noalias() += ym.transpose() * gcols;
      }
    });
  }
  return out;
}

Tensor avgpool2(Graph& g, const Tensor& x) {
  check(x.rank() == 3 && x.shape()[1] % 2 == 0 && x.shape()[2] % 2 == 0,
        "avgpool2: need even {C,H,W}");
  int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  int oh = h / 2, ow = w / 2;
  Tensor out = Tensor::zeros({c, oh, ow});
  {
    const double* src = x.values().data();
    double* dst = out.values().data();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const double* s0 = src + (long(ch) * h + 2 * y) * w + 2 * xx;
          dst[(long(ch) * oh + y) * ow + xx] =
              0.25 * (s0[0] + s0[1] + s0[w] + s0[w + 1]);
        }
  }
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od, c, h, w, oh, ow] {
      double* gx = grad_acc(xd).data();
      const double* go = od->grad.data();
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            double v = 0.25 * go[(long(ch) * oh + y) * ow + xx];
            double* d0 = gx + (long(ch) * h + 2 * y) * w + 2 * xx;
            d0[0] += v;
            d0[1] += v;
            d0[w] += v;
            d0[w + 1] += v;
          }
    });
  }
  return out;
}

Tensor upsample2(Graph& g, const Tensor& x) {
  check(x.rank() == 3, "upsample2: need {C,H,W}");
  int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
  {
    const double* src = x.values().data();
    double* dst = out.values().data();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double v = src[(long(ch) * h + y) * w + xx];
          double* d0 = dst + (long(ch) * 2 * h + 2 * y) * 2 * w + 2 * xx;
          d0[0] = v;
          d0[1] = v;
          d0[2 * w] = v;
          d0[2 * w + 1] = v;
        }
  }
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od, c, h, w] {
      double* gx = grad_acc(xd).data();
      const double* go = od->grad.data();
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const double* s0 = go + (long(ch) * 2 * h + 2 * y) * 2 * w + 2 * xx;
            gx[(long(ch) * h + y) * w + xx] +=
                s0[0] + s0[1] + s0[2 * w] + s0[2 * w + 1];
          }
    });
  }
  return out;
}

Tensor conv3d_transpose(Graph& g, const Tensor& x, const Tensor& w, int stride,
                        int pad) {
  check(x.rank() == 4, "conv3d_transpose: input must be {Cin,D,D,D}");
  check(w.rank() == 5, "conv3d_transpose: weight must be {Cin,Cout,k,k,k}");
  int ci = x.shape()[0], d2 = x.shape()[1], d1 = x.shape()[2], d0 = x.shape()[3];
  check(w.shape()[0] == ci, "conv3d_transpose: channel mismatch");
  int co = w.shape()[1], k = w.shape()[2];
  int o2 = (d2 - 1) * stride - 2 * pad + k;
  int o1 = (d1 - 1) * stride - 2 * pad + k;
  int o0 = (d0 - 1) * stride - 2 * pad + k;
  check(o2 > 0 && o1 > 0 && o0 > 0, "conv3d_transpose: empty output");

  auto run_fwd = [=](const double* xs, const double* ws, double* os) {
    for (int i = 0; i < ci; ++i)
      for (int z = 0; z < d2; ++z)
        for (int y = 0; y < d1; ++y)
          for (int xx = 0; xx < d0; ++xx) {
            double v = xs[((long(i) * d2 + z) * d1 + y) * d0 + xx];
            if (v == 0.0) continue;
            for (int o = 0; o < co; ++o)
              for (int kz = 0; kz < k; ++kz) {
                int oz = z * stride - pad + kz;
                if (oz < 0 || oz >= o2) continue;
                for (int ky = 0; ky < k; ++ky) {
                  int oy = y * stride - pad + ky;
                  if (oy < 0 || oy >= o1) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    int ox = xx * stride - pad + kx;
                    if (ox < 0 || ox >= o0) continue;
                    os[((long(o) * o2 + oz) * o1 + oy) * o0 + ox] +=
                        v * ws[(((long(i) * co + o) * k + kz) * k + ky) * k + kx];
                  }
                }
              }
          }
  };

  Tensor out = Tensor::zeros({co, o2, o1, o0});
  run_fwd(x.values().data(), w.values().data(), out.values().data());

  if (g.recording() && (x.needs_grad() || w.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(w);
    g.touch(out);
    auto xd = x.d, wd = w.d, od = out.d;
    g.record([xd, wd, od, ci, co, k, stride, pad, d2, d1, d0, o2, o1, o0] {
      const double* go = od->grad.data();
      const double* ws = wd->values.data();
      const double* xs = xd->values.data();
      bool gx = xd->requires_grad || xd->needs_grad;
      bool gw = wd->requires_grad || wd->needs_grad;
      double* gxd = gx ? grad_acc(xd).data() : nullptr;
      double* gwd = gw ? grad_acc(wd).data() : nullptr;
      for (int i = 0; i < ci; ++i)
        for (int z = 0; z < d2; ++z)
          for (int y = 0; y < d1; ++y)
            for (int xx = 0; xx < d0; ++xx) {
              long xi = ((long(i) * d2 + z) * d1 + y) * d0 + xx;
              double acc = 0.0;
              for (int o = 0; o < co; ++o)
                for (int kz = 0; kz < k; ++kz) {
                  int oz = z * stride - pad + kz;
                  if (oz < 0 || oz >= o2) continue;
                  for (int ky = 0; ky < k; ++ky) {
                    int oy = y * stride - pad + ky;
                    if (oy < 0 || oy >= o1) continue;
                    for (int kx = 0; kx < k; ++kx) {
                      int ox = xx * stride - pad + kx;
                      if (ox < 0 || ox >= o0) continue;
                      double gov = go[((long(o) * o2 + oz) * o1 + oy) * o0 + ox];
                      long wi = (((long(i) * co + o) * k + kz) * k + ky) * k + kx;
                      if (gxd) acc += gov * ws[wi];
                      if (gwd) gwd[wi] += gov * xs[xi];
                    }
                  }
                }
              if (gxd) gxd[xi] += acc;
            }
    });
  }
  return out;
}

// ---- kernel modulation ----

Tensor scale_weight_in(Graph& g, const Tensor& w, const Tensor& style) {
  check(w.rank() == 4, "scale_weight_in: weight must be {Cout,Cin,k,k}");
  check(style.rank() == 1 && style.shape()[0] == w.shape()[1],
        "scale_weight_in: style length " +
            std::to_string(style.size()) + " != Cin " +
            std::to_string(w.shape()[1]));
  int co = w.shape()[0], ci = w.shape()[1], kk = w.shape()[2] * w.shape()[3];
  Tensor out = Tensor::zeros(w.shape());
  {
    const double* ws = w.values().data();
    const double* ss = style.values().data();
    double* os = out.values().data();
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < ci; ++i)
        for (int t = 0; t < kk; ++t)
          os[(long(o) * ci + i) * kk + t] = ws[(long(o) * ci + i) * kk + t] * ss[i];
  }
  if (g.recording() && (w.needs_grad() || style.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(w);
    g.touch(style);
    g.touch(out);
    auto wd = w.d, sd = style.d, od = out.d;
    g.record([wd, sd, od, co, ci, kk] {
      const double* go = od->grad.data();
      if (wd->requires_grad || wd->needs_grad) {
        double* gw = grad_acc(wd).data();
        const double* ss = sd->values.data();
        for (int o = 0; o < co; ++o)
          for (int i = 0; i < ci; ++i)
            for (int t = 0; t < kk; ++t)
              gw[(long(o) * ci + i) * kk + t] +=
                  go[(long(o) * ci + i) * kk + t] * ss[i];
      }
      if (sd->requires_grad || sd->needs_grad) {
        double* gs = grad_acc(sd).data();
        const double* ws = wd->values.data();
        for (int o = 0; o < co; ++o)
          for (int i = 0; i < ci; ++i)
            for (int t = 0; t < kk; ++t)
              gs[i] += go[(long(o) * ci + i) * kk + t] *
                       ws[(long(o) * ci + i) * kk + t];
      }
    });
  }
  return out;
}

Tensor scale_weight_out(Graph& g, const Tensor& w, const Tensor& d) {
  check(w.rank() == 4, "scale_weight_out: weight must be {Cout,Cin,k,k}");
  check(d.rank() == 1 && d.shape()[0] == w.shape()[0],
        "scale_weight_out: scale length mismatch");
  int co = w.shape()[0];
  long per = w.size() / co;
  Tensor out = Tensor::zeros(w.shape());
  {
    const double* ws = w.values().data();
    const double* ds = d.values().data();
    double* os = out.values().data();
    for (int o = 0; o < co; ++o)
      for (long t = 0; t < per; ++t) os[o * per + t] = ws[o * per + t] * ds[o];
  }
  if (g.recording() && (w.needs_grad() || d.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(w);
    g.touch(d);
    g.touch(out);
    auto wd = w.d, dd = d.d, od = out.d;
    g.record([wd, dd, od, co, per] {
      const double* go = od->grad.data();
      if (wd->requires_grad || wd->needs_grad) {
        double* gw = grad_acc(wd).data();
        const double* ds = dd->values.data();
        for (int o = 0; o < co; ++o)
          for (long t = 0; t < per; ++t) gw[o * per + t] += go[o * per + t] * ds[o];
      }
      if (dd->requires_grad || dd->needs_grad) {
        double* gd = grad_acc(dd).data();
        const double* ws = wd->values.data();
        for (int o = 0; o < co; ++o)
          for (long t = 0; t < per; ++t) gd[o] += go[o * per + t] * ws[o * per + t];
      }
    });
  }
  return out;
}

Tensor filter_sqnorm(Graph& g, const Tensor& w) {
  check(w.rank() == 4, "filter_sqnorm: weight must be {Cout,Cin,k,k}");
  int co = w.shape()[0];
  long per = w.size() / co;
  Tensor out = Tensor::zeros({co});
  {
    const double* ws = w.values().data();
    for (int o = 0; o < co; ++o)
      out.values()[o] =
          Eigen::Map<const Eigen::ArrayXd>(ws + o * per, per).square().sum();
  }
  if (g.recording() && w.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(w);
    g.touch(out);
    auto wd = w.d, od = out.d;
    g.record([wd, od, co, per] {
      double* gw = grad_acc(wd).data();
      const double* ws = wd->values.data();
      const double* go = od->grad.data();
      for (int o = 0; o < co; ++o)
        for (long t = 0; t < per; ++t) gw[o * per + t] += 2.0 * ws[o * per + t] * go[o];
    });
  }
  return out;
}

Tensor modulated_conv2d(Graph& g, const Tensor& x, const Tensor& w,
                        const Tensor& style, bool demodulate, double eps,
                        int stride, int pad) {
  Tensor wm = scale_weight_in(g, w, style);
  if (demodulate) {
    Tensor n = filter_sqnorm(g, wm);
    Tensor d = rsqrt(g, add_scalar(g, n, eps));
    wm = scale_weight_out(g, wm, d);
  }
  return conv2d(g, x, wm, stride, pad);
}

} // namespace hav::diff
