#include "hav/diffcore/ops.hpp"

#include <cmath>

namespace hav::diff {

namespace {

// One interpolation axis on the pixel-center grid: nodes at (i+0.5)/n.
// Inside [0,1] the half-pixel margins clamp to the edge node so constants
// are preserved everywhere in bounds; the hard zero applies only outside.
struct AxisLerp {
  int i0, i1;
  double f; // weight of i1
  void set(double coord, int n) {
    double x = coord * n - 0.5;
    if (x <= 0.0) {
      i0 = i1 = 0;
      f = 0.0;
    } else if (x >= n - 1) {
      i0 = i1 = n - 1;
      f = 0.0;
    } else {
      i0 = int(std::floor(x));
      i1 = i0 + 1;
      f = x - i0;
    }
  }
};

inline bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

} // namespace

Tensor bilinear_sample(Graph& g, const Tensor& plane, const Tensor& uv) {
  check(plane.rank() == 3, "bilinear_sample: plane must be {C,H,W}");
  check(uv.rank() == 2 && uv.shape()[1] == 2, "bilinear_sample: uv must be {N,2}");
  int c = plane.shape()[0], h = plane.shape()[1], w = plane.shape()[2];
  int n = uv.shape()[0];
  Tensor out = Tensor::zeros({n, c});

  {
    const double* pv = plane.values().data();
    const double* uvv = uv.values().data();
    double* ov = out.values().data();
    for (int q = 0; q < n; ++q) {
      double u = uvv[q * 2 + 0], v = uvv[q * 2 + 1];
      if (!in_unit(u) || !in_unit(v)) continue;
      AxisLerp ax, ay;
      ax.set(u, w);
      ay.set(v, h);
      for (int ch = 0; ch < c; ++ch) {
        const double* p = pv + long(ch) * h * w;
        double top = (1 - ax.f) * p[ay.i0 * w + ax.i0] + ax.f * p[ay.i0 * w + ax.i1];
        double bot = (1 - ax.f) * p[ay.i1 * w + ax.i0] + ax.f * p[ay.i1 * w + ax.i1];
        ov[long(q) * c + ch] = (1 - ay.f) * top + ay.f * bot;
      }
    }
  }

  if (g.recording() && (plane.needs_grad() || uv.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(plane);
    g.touch(uv);
    g.touch(out);
    auto pd = plane.d, ud = uv.d, od = out.d;
    g.record([pd, ud, od, c, h, w, n] {
      const double* go = od->grad.data();
      const double* pv = pd->values.data();
      const double* uvv = ud->values.data();
      bool gp = pd->requires_grad || pd->needs_grad;
      bool gu = ud->requires_grad || ud->needs_grad;
      double* gpd = gp ? grad_acc(pd).data() : nullptr;
      double* gud = gu ? grad_acc(ud).data() : nullptr;
      for (int q = 0; q < n; ++q) {
        double u = uvv[q * 2 + 0], v = uvv[q * 2 + 1];
        if (!in_unit(u) || !in_unit(v)) continue;
        AxisLerp ax, ay;
        ax.set(u, w);
        ay.set(v, h);
        double du = 0.0, dv = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          double gv = go[long(q) * c + ch];
          const double* p = pv + long(ch) * h * w;
          double p00 = p[ay.i0 * w + ax.i0], p01 = p[ay.i0 * w + ax.i1];
          double p10 = p[ay.i1 * w + ax.i0], p11 = p[ay.i1 * w + ax.i1];
          if (gpd) {
            double* gpl = gpd + long(ch) * h * w;
            gpl[ay.i0 * w + ax.i0] += (1 - ay.f) * (1 - ax.f) * gv;
            gpl[ay.i0 * w + ax.i1] += (1 - ay.f) * ax.f * gv;
            gpl[ay.i1 * w + ax.i0] += ay.f * (1 - ax.f) * gv;
            gpl[ay.i1 * w + ax.i1] += ay.f * ax.f * gv;
          }
          du += gv * ((1 - ay.f) * (p01 - p00) + ay.f * (p11 - p10));
          dv += gv * ((1 - ax.f) * (p10 - p00) + ax.f * (p11 - p01));
        }
        if (gud) {
          gud[q * 2 + 0] += du * w; // clamped bands have i0==i1 -> slope 0
          gud[q * 2 + 1] += dv * h;
        }
      }
    });
  }
  return out;
}

Tensor trilinear_sample(Graph& g, const Tensor& vol, const Tensor& pts) {
  check(vol.rank() == 3, "trilinear_sample: volume must be {D2,D1,D0}");
  check(pts.rank() == 2 && pts.shape()[1] == 3,
        "trilinear_sample: pts must be {N,3}");
  int d2 = vol.shape()[0], d1 = vol.shape()[1], d0 = vol.shape()[2];
  int n = pts.shape()[0];
  Tensor out = Tensor::zeros({n});

  auto idx = [=](int i2, int i1, int i0) { return (long(i2) * d1 + i1) * d0 + i0; };

  {
    const double* vv = vol.values().data();
    const double* pp = pts.values().data();
    double* ov = out.values().data();
    for (int q = 0; q < n; ++q) {
      double p0 = pp[q * 3 + 0], p1 = pp[q * 3 + 1], p2 = pp[q * 3 + 2];
      if (!in_unit(p0) || !in_unit(p1) || !in_unit(p2)) continue;
      AxisLerp a0, a1, a2;
      a0.set(p0, d0);
      a1.set(p1, d1);
      a2.set(p2, d2);
      double acc = 0.0;
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            double wgt = (dz ? a2.f : 1 - a2.f) * (dy ? a1.f : 1 - a1.f) *
                         (dx ? a0.f : 1 - a0.f);
            acc += wgt * vv[idx(dz ? a2.i1 : a2.i0, dy ? a1.i1 : a1.i0,
                                dx ? a0.i1 : a0.i0)];
          }
      ov[q] = acc;
    }
  }

  if (g.recording() && (vol.needs_grad() || pts.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(vol);
    g.touch(pts);
    g.touch(out);
    auto vd = vol.d, pd = pts.d, od = out.d;
    g.record([vd, pd, od, d2, d1, d0, n, idx] {
      const double* go = od->grad.data();
      const double* vv = vd->values.data();
      const double* pp = pd->values.data();
      bool gvol = vd->requires_grad || vd->needs_grad;
      bool gpts = pd->requires_grad || pd->needs_grad;
      double* gv = gvol ? grad_acc(vd).data() : nullptr;
      double* gp = gpts ? grad_acc(pd).data() : nullptr;
      for (int q = 0; q < n; ++q) {
        double p0 = pp[q * 3 + 0], p1 = pp[q * 3 + 1], p2 = pp[q * 3 + 2];
        if (!in_unit(p0) || !in_unit(p1) || !in_unit(p2)) continue;
        AxisLerp a0, a1, a2;
        a0.set(p0, d0);
        a1.set(p1, d1);
        a2.set(p2, d2);
        double gq = go[q];
        double g0 = 0.0, g1 = 0.0, g2 = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              double wz = dz ? a2.f : 1 - a2.f;
              double wy = dy ? a1.f : 1 - a1.f;
              double wx = dx ? a0.f : 1 - a0.f;
              long ci = idx(dz ? a2.i1 : a2.i0, dy ? a1.i1 : a1.i0,
                            dx ? a0.i1 : a0.i0);
              double cv = vv[ci];
              if (gv) gv[ci] += wz * wy * wx * gq;
              g0 += gq * cv * wz * wy * (dx ? 1.0 : -1.0) * 1.0;
              g1 += gq * cv * wz * wx * (dy ? 1.0 : -1.0) * 1.0;
              g2 += gq * cv * wy * wx * (dz ? 1.0 : -1.0) * 1.0;
            }
        if (gp) {
          gp[q * 3 + 0] += g0 * d0;
          gp[q * 3 + 1] += g1 * d1;
          gp[q * 3 + 2] += g2 * d2;
        }
      }
    });
  }
  return out;
}

Tensor bilinear_sample_point(Graph& g, const Tensor& plane, double u, double v) {
  Array uv(2);
  uv << u, v;
  return bilinear_sample(g, plane, Tensor::from({1, 2}, uv));
}

double trilinear_sample_point(const Tensor& vol, double p0, double p1, double p2) {
  Graph g(Graph::NoGrad);
  Array p(3);
  p << p0, p1, p2;
  return trilinear_sample(g, vol, Tensor::from({1, 3}, p)).values()[0];
}

int posenc_dim(int bands, bool include_raw) {
  return 6 * bands + (include_raw ? 3 : 0);
}

Tensor posenc(Graph& g, const Tensor& pts, int bands, bool include_raw) {
  check(pts.rank() == 2 && pts.shape()[1] == 3, "posenc: pts must be {N,3}");
  int n = pts.shape()[0];
  int dim = posenc_dim(bands, include_raw);
  int base = include_raw ? 3 : 0;
  constexpr double kPi = 3.14159265358979323846;
  Tensor out = Tensor::zeros({n, dim});
  {
    const double* pp = pts.values().data();
    double* ov = out.values().data();
    for (int q = 0; q < n; ++q) {
      double* orow = ov + long(q) * dim;
      if (include_raw)
        for (int a = 0; a < 3; ++a) orow[a] = pp[q * 3 + a];
      double f = kPi;
      for (int i = 0; i < bands; ++i, f *= 2.0)
        for (int a = 0; a < 3; ++a) {
          double t = f * pp[q * 3 + a];
          orow[base + 6 * i + a] = std::sin(t);
          orow[base + 6 * i + 3 + a] = std::cos(t);
        }
    }
  }
  if (g.recording() && pts.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(pts);
    g.touch(out);
    auto pd = pts.d, od = out.d;
    g.record([pd, od, n, dim, bands, include_raw, base] {
      double* gp = grad_acc(pd).data();
      const double* go = od->grad.data();
      const double* ov = od->values.data();
      for (int q = 0; q < n; ++q) {
        const double* grow = go + long(q) * dim;
        const double* orow = ov + long(q) * dim;
        for (int a = 0; a < 3; ++a) {
          double acc = include_raw ? grow[a] : 0.0;
          double f = kPi;
          for (int i = 0; i < bands; ++i, f *= 2.0) {
            double s = orow[base + 6 * i + a];
            double cc = orow[base + 6 * i + 3 + a];
            acc += grow[base + 6 * i + a] * f * cc;
            acc -= grow[base + 6 * i + 3 + a] * f * s;
          }
          gp[q * 3 + a] += acc;
        }
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> ray_integrate(Graph& g, const Tensor& sigma,
                                        const Tensor& feat, const Array& dt) {
  check(sigma.rank() == 2, "ray_integrate: sigma must be {R,S}");
  int r = sigma.shape()[0], s = sigma.shape()[1];
  check(feat.rank() == 2 && feat.shape()[0] == long(r) * s,
        "ray_integrate: feat must be {R*S,C}");
  check(dt.size() == long(r) * s, "ray_integrate: dt size mismatch");
  int c = feat.shape()[1];

  Tensor out_feat = Tensor::zeros({r, c});
  Tensor out_alpha = Tensor::zeros({r});
  {
    const double* sv = sigma.values().data();
    const double* fv = feat.values().data();
    double* fo = out_feat.values().data();
    double* ao = out_alpha.values().data();
    for (int rr = 0; rr < r; ++rr) {
      double trans = 1.0;
      double asum = 0.0;
      for (int ss = 0; ss < s; ++ss) {
        long i = long(rr) * s + ss;
        double a = 1.0 - std::exp(-sv[i] * dt[i]);
        double wgt = trans * a;
        for (int ch = 0; ch < c; ++ch) fo[long(rr) * c + ch] += wgt * fv[i * c + ch];
        asum += wgt;
        trans *= (1.0 - a);
      }
      ao[rr] = asum;
    }
  }

  if (g.recording() && (sigma.needs_grad() || feat.needs_grad())) {
    out_feat.set_needs_grad(true);
    out_alpha.set_needs_grad(true);
    g.touch(sigma);
    g.touch(feat);
    g.touch(out_feat);
    g.touch(out_alpha);
    auto sd = sigma.d, fd = feat.d, ofd = out_feat.d, oad = out_alpha.d;
    Array dtc = dt;
    g.record([sd, fd, ofd, oad, dtc, r, s, c] {
      const double* sv = sd->values.data();
      const double* fv = fd->values.data();
      const double* gf = ofd->grad.data();
      const double* ga = oad->grad.data();
      bool gsig = sd->requires_grad || sd->needs_grad;
      bool gfeat = fd->requires_grad || fd->needs_grad;
      double* gsd = gsig ? grad_acc(sd).data() : nullptr;
      double* gfd = gfeat ? grad_acc(fd).data() : nullptr;

      std::vector<double> alpha(s), tbuf(s), q(s);
      for (int rr = 0; rr < r; ++rr) {
        double trans = 1.0;
        for (int ss = 0; ss < s; ++ss) {
          long i = long(rr) * s + ss;
          alpha[ss] = 1.0 - std::exp(-sv[i] * dtc[i]);
          tbuf[ss] = trans; // T_ss
          trans *= (1.0 - alpha[ss]);
        }
        // q_j = dL/dw_j where w_j = T_j alpha_j
        for (int ss = 0; ss < s; ++ss) {
          long i = long(rr) * s + ss;
          double acc = ga[rr];
          for (int ch = 0; ch < c; ++ch)
            acc += gf[long(rr) * c + ch] * fv[i * c + ch];
          q[ss] = acc;
          if (gfd) {
            double wgt = tbuf[ss] * alpha[ss];
            for (int ch = 0; ch < c; ++ch)
              gfd[i * c + ch] += wgt * gf[long(rr) * c + ch];
          }
        }
        if (gsd) {
          // dL/dalpha_i = q_i T_i - sum_{j>i} q_j alpha_j prod_{k<j,k!=i}(1-alpha_k),
          // accumulated without dividing by (1-alpha_i), which may reach 0.
          for (int ss = 0; ss < s; ++ss) {
            double da = q[ss] * tbuf[ss];
            double partial = tbuf[ss];
            for (int jj = ss + 1; jj < s; ++jj) {
              da -= q[jj] * alpha[jj] * partial;
              partial *= (1.0 - alpha[jj]);
            }
            long i = long(rr) * s + ss;
            gsd[i] += da * dtc[i] * std::exp(-sv[i] * dtc[i]);
          }
        }
      }
    });
  }
  return {out_feat, out_alpha};
}

} // namespace hav::diff
