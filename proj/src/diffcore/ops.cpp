#include "hav/diffcore/ops.hpp"

#include <cmath>

namespace hav::diff {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

CMapM mat(const Tensor& t) {
  check(t.rank() == 2, "expected rank-2 tensor, got " + shape_str(t.shape()));
  return CMapM(t.values().data(), t.shape()[0], t.shape()[1]);
}

CMapM mat_of(const std::shared_ptr<TensorData>& d) {
  return CMapM(d->values.data(), d->shape[0], d->shape[1]);
}

MapM mat_grad(const std::shared_ptr<TensorData>& d) {
  Array& g = grad_acc(d);
  return MapM(g.data(), d->shape[0], d->shape[1]);
}

template <class Fwd, class Bwd>
Tensor unary_op(Graph& g, const Tensor& a, Fwd fwd, Bwd dfdx) {
  Tensor out = Tensor::from(a.shape(), fwd(a.values()));
  if (g.recording() && a.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(out);
    auto ad = a.d, od = out.d;
    g.record([ad, od, dfdx] {
      grad_acc(ad) += dfdx(ad->values, od->values) * od->grad;
    });
  }
  return out;
}

} // namespace

// ---- structural ----

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  check(shape_size(shape) == x.size(),
        "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out = Tensor::from(std::move(shape), x.values());
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od] { grad_acc(xd) += od->grad; });
  }
  return out;
}

Tensor concat_cols(Graph& g, const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_cols: empty input");
  int n = xs[0].shape()[0];
  int total = 0;
  bool needs = false;
  for (const auto& x : xs) {
    check(x.rank() == 2 && x.shape()[0] == n, "concat_cols: row mismatch");
    total += x.shape()[1];
    needs = needs || x.needs_grad();
  }
  Tensor out = Tensor::zeros({n, total});
  {
    MapM om(out.values().data(), n, total);
    int c0 = 0;
    for (const auto& x : xs) {
      om.middleCols(c0, x.shape()[1]) = mat(x);
      c0 += x.shape()[1];
    }
  }
  if (g.recording() && needs) {
    out.set_needs_grad(true);
    std::vector<std::shared_ptr<TensorData>> ins;
    for (const auto& x : xs) {
      g.touch(x);
      ins.push_back(x.d);
    }
    g.touch(out);
    auto od = out.d;
    g.record([ins, od, n, total] {
      CMapM gm(od->grad.data(), n, total);
      int c0 = 0;
      for (auto& xd : ins) {
        int c = xd->shape[1];
        if (xd->requires_grad || xd->needs_grad)
          mat_grad(xd) += gm.middleCols(c0, c);
        c0 += c;
      }
    });
  }
  return out;
}

Tensor slice_cols(Graph& g, const Tensor& x, int begin, int len) {
  check(x.rank() == 2 && begin >= 0 && begin + len <= x.shape()[1],
        "slice_cols: bad range");
  int n = x.shape()[0];
  Tensor out = Tensor::zeros({n, len});
  MapM(out.values().data(), n, len) = mat(x).middleCols(begin, len);
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od, begin, len, n] {
      mat_grad(xd).middleCols(begin, len) += CMapM(od->grad.data(), n, len);
    });
  }
  return out;
}

Tensor row(Graph& g, const Tensor& x, int i) {
  check(x.rank() == 2 && i >= 0 && i < x.shape()[0], "row: index out of range");
  int c = x.shape()[1];
  Tensor out = Tensor::from({1, c}, x.values().segment(long(i) * c, c));
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od, i, c] {
      grad_acc(xd).segment(long(i) * c, c) += od->grad;
    });
  }
  return out;
}

Tensor to_chw(Graph& g, const Tensor& x, int h, int w) {
  check(x.rank() == 2 && x.shape()[0] == h * w, "to_chw: shape mismatch");
  int c = x.shape()[1];
  Tensor out = Tensor::zeros({c, h, w});
  {
    const double* src = x.values().data();
    double* dst = out.values().data();
    for (long p = 0; p < long(h) * w; ++p)
      for (int ch = 0; ch < c; ++ch) dst[long(ch) * h * w + p] = src[p * c + ch];
  }
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od, h, w, c] {
      Array& gx = grad_acc(xd);
      const double* gsrc = od->grad.data();
      for (long p = 0; p < long(h) * w; ++p)
        for (int ch = 0; ch < c; ++ch)
          gx[p * c + ch] += gsrc[long(ch) * h * w + p];
    });
  }
  return out;
}

Tensor detach(const Tensor& x) { return Tensor::from(x.shape(), x.values()); }

// ---- elementwise ----

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  Tensor out = Tensor::from(a.shape(), a.values() + b.values());
  if (g.recording() && (a.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(b);
    g.touch(out);
    auto ad = a.d, bd = b.d, od = out.d;
    g.record([ad, bd, od] {
      if (ad->requires_grad || ad->needs_grad) grad_acc(ad) += od->grad;
      if (bd->requires_grad || bd->needs_grad) grad_acc(bd) += od->grad;
    });
  }
  return out;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor out = Tensor::from(a.shape(), a.values() - b.values());
  if (g.recording() && (a.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(b);
    g.touch(out);
    auto ad = a.d, bd = b.d, od = out.d;
    g.record([ad, bd, od] {
      if (ad->requires_grad || ad->needs_grad) grad_acc(ad) += od->grad;
      if (bd->requires_grad || bd->needs_grad) grad_acc(bd) -= od->grad;
    });
  }
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor out = Tensor::from(a.shape(), a.values() * b.values());
  if (g.recording() && (a.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(b);
    g.touch(out);
    auto ad = a.d, bd = b.d, od = out.d;
    g.record([ad, bd, od] {
      if (ad->requires_grad || ad->needs_grad)
        grad_acc(ad) += bd->values * od->grad;
      if (bd->requires_grad || bd->needs_grad)
        grad_acc(bd) += ad->values * od->grad;
    });
  }
  return out;
}

Tensor divide(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "divide: shape mismatch");
  Tensor out = Tensor::from(a.shape(), a.values() / b.values());
  if (g.recording() && (a.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(b);
    g.touch(out);
    auto ad = a.d, bd = b.d, od = out.d;
    g.record([ad, bd, od] {
      if (ad->requires_grad || ad->needs_grad)
        grad_acc(ad) += od->grad / bd->values;
      if (bd->requires_grad || bd->needs_grad)
        grad_acc(bd) -= od->grad * od->values / bd->values;
    });
  }
  return out;
}

Tensor add_scalar(Graph& g, const Tensor& a, double s) {
  return unary_op(
      g, a, [s](const Array& v) { return Array(v + s); },
      [](const Array&, const Array& o) { return Array::Ones(o.size()); });
}

Tensor mul_scalar(Graph& g, const Tensor& a, double s) {
  return unary_op(
      g, a, [s](const Array& v) { return Array(v * s); },
      [s](const Array&, const Array& o) {
        return Array(Array::Constant(o.size(), s));
      });
}

Tensor neg(Graph& g, const Tensor& a) { return mul_scalar(g, a, -1.0); }

Tensor square(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, [](const Array& v) { return Array(v.square()); },
      [](const Array& v, const Array&) { return Array(2.0 * v); });
}

Tensor sqrt_op(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, [](const Array& v) { return Array(v.sqrt()); },
      [](const Array&, const Array& o) { return Array(0.5 / o); });
}

Tensor rsqrt(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, [](const Array& v) { return Array(v.rsqrt()); },
      [](const Array& v, const Array& o) { return Array(-0.5 * o / v); });
}

Tensor exp_op(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, [](const Array& v) { return Array(v.exp()); },
      [](const Array&, const Array& o) { return o; });
}

Tensor abs_op(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, [](const Array& v) { return Array(v.abs()); },
      [](const Array& v, const Array&) { return Array(v.sign()); });
}

Tensor relu(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, [](const Array& v) { return Array(v.max(0.0)); },
      [](const Array& v, const Array&) {
        return Array((v > 0.0).cast<double>());
      });
}

Tensor lrelu(Graph& g, const Tensor& a, double slope) {
  return unary_op(
      g, a,
      [slope](const Array& v) { return Array(v.max(slope * v)); },
      [slope](const Array& v, const Array&) {
        return Array((v > 0.0).select(Array::Ones(v.size()),
                                      Array::Constant(v.size(), slope)));
      });
}

Tensor softplus(Graph& g, const Tensor& a) {
  auto sp = [](const Array& v) {
    // stable: max(x,0) + log1p(exp(-|x|))
    return Array(v.max(0.0) + (1.0 + (-v.abs()).exp()).log());
  };
  auto dsp = [](const Array& v, const Array&) {
    return Array(0.5 * (1.0 + (0.5 * v).tanh())); // sigmoid(v), stable
  };
  return unary_op(g, a, sp, dsp);
}

Tensor sigmoid(Graph& g, const Tensor& a) {
  auto sg = [](const Array& v) {
    return Array(0.5 * (1.0 + (0.5 * v).tanh()));
  };
  auto dsg = [](const Array&, const Array& o) { return Array(o * (1.0 - o)); };
  return unary_op(g, a, sg, dsg);
}

// ---- reductions / losses ----

Tensor sum(Graph& g, const Tensor& a) {
  Tensor out = Tensor::scalar(a.values().sum());
  if (g.recording() && a.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(out);
    auto ad = a.d, od = out.d;
    g.record([ad, od] { grad_acc(ad) += od->grad[0]; });
  }
  return out;
}

Tensor mean(Graph& g, const Tensor& a) {
  double invn = 1.0 / double(a.size());
  Tensor out = Tensor::scalar(a.values().sum() * invn);
  if (g.recording() && a.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(out);
    auto ad = a.d, od = out.d;
    g.record([ad, od, invn] { grad_acc(ad) += od->grad[0] * invn; });
  }
  return out;
}

Tensor bce_mean(Graph& g, const Tensor& pred, const Tensor& target) {
  check(pred.shape() == target.shape(), "bce_mean: shape mismatch");
  const double eps = 1e-7;
  Array p = pred.values().min(1.0 - eps).max(eps);
  const Array& t = target.values();
  double invn = 1.0 / double(pred.size());
  double l = (-(t * p.log() + (1.0 - t) * (1.0 - p).log())).sum() * invn;
  Tensor out = Tensor::scalar(l);
  if (g.recording() && pred.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(pred);
    g.touch(out);
    auto pd = pred.d, od = out.d;
    Array tv = t;
    g.record([pd, od, tv, invn, eps] {
      Array p = pd->values.min(1.0 - eps).max(eps);
      // zero slope inside the clamped region
      Array lo = (pd->values > eps).cast<double>();
      Array hi = (pd->values < 1.0 - eps).cast<double>();
      grad_acc(pd) +=
          od->grad[0] * invn * lo * hi * (p - tv) / (p * (1.0 - p));
    });
  }
  return out;
}

// ---- linear algebra ----

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
        "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int m = a.shape()[0], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  MapM(out.values().data(), m, n).noalias() = mat(a) * mat(b);
  if (g.recording() && (a.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(b);
    g.touch(out);
    auto ad = a.d, bd = b.d, od = out.d;
    g.record([ad, bd, od, m, n] {
      CMapM go(od->grad.data(), m, n);
      if (ad->requires_grad || ad->needs_grad)
        mat_grad(ad).noalias() += go * mat_of(bd).transpose();
      if (bd->requires_grad || bd->needs_grad)
        mat_grad(bd).noalias() += mat_of(ad).transpose() * go;
    });
  }
  return out;
}

Tensor add_rowvec(Graph& g, const Tensor& x, const Tensor& b) {
  check(x.rank() == 2 && b.rank() == 2 && b.shape()[0] == 1 &&
            b.shape()[1] == x.shape()[1],
        "add_rowvec: shape mismatch");
  int n = x.shape()[0], c = x.shape()[1];
  Tensor out = Tensor::zeros({n, c});
  MapM(out.values().data(), n, c) =
      mat(x).rowwise() + Eigen::RowVectorXd::Map(b.values().data(), c);
  if (g.recording() && (x.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(b);
    g.touch(out);
    auto xd = x.d, bd = b.d, od = out.d;
    g.record([xd, bd, od, n, c] {
      CMapM go(od->grad.data(), n, c);
      if (xd->requires_grad || xd->needs_grad) mat_grad(xd) += go;
      if (bd->requires_grad || bd->needs_grad)
        mat_grad(bd) += go.colwise().sum();
    });
  }
  return out;
}

Tensor repeat_row(Graph& g, const Tensor& x, int n) {
  check(x.rank() == 2 && x.shape()[0] == 1, "repeat_row: need {1,C}");
  int c = x.shape()[1];
  Tensor out = Tensor::zeros({n, c});
  MapM(out.values().data(), n, c).rowwise() =
      Eigen::RowVectorXd::Map(x.values().data(), c);
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    g.record([xd, od, n, c] {
      mat_grad(xd) += CMapM(od->grad.data(), n, c).colwise().sum();
    });
  }
  return out;
}

Tensor scatter_rows(Graph& g, const Tensor& x, const std::vector<int>& idx,
                    int n) {
  check(x.rank() == 2 && int(idx.size()) == x.shape()[0],
        "scatter_rows: index count mismatch");
  int c = x.shape()[1];
  Tensor out = Tensor::zeros({n, c});
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < n, "scatter_rows: index out of range");
    out.values().segment(long(idx[i]) * c, c) = x.values().segment(long(i) * c, c);
  }
  if (g.recording() && x.needs_grad()) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(out);
    auto xd = x.d, od = out.d;
    auto ids = idx;
    g.record([xd, od, ids, c] {
      Array& gx = grad_acc(xd);
      for (size_t i = 0; i < ids.size(); ++i)
        gx.segment(long(i) * c, c) += od->grad.segment(long(ids[i]) * c, c);
    });
  }
  return out;
}

Tensor add_channel_bias(Graph& g, const Tensor& x, const Tensor& b) {
  check(x.rank() >= 2 && b.rank() == 1 && b.shape()[0] == x.shape()[0],
        "add_channel_bias: bias must match leading extent");
  int c = x.shape()[0];
  long per = x.size() / c;
  Tensor out = Tensor::from(x.shape(), x.values());
  for (int ch = 0; ch < c; ++ch)
    out.values().segment(ch * per, per) += b.values()[ch];
  if (g.recording() && (x.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(b);
    g.touch(out);
    auto xd = x.d, bd = b.d, od = out.d;
    g.record([xd, bd, od, c, per] {
      if (xd->requires_grad || xd->needs_grad) grad_acc(xd) += od->grad;
      if (bd->requires_grad || bd->needs_grad) {
        Array& gb = grad_acc(bd);
        for (int ch = 0; ch < c; ++ch)
          gb[ch] += od->grad.segment(ch * per, per).sum();
      }
    });
  }
  return out;
}

Tensor concat_chan(Graph& g, const Tensor& a, const Tensor& b) {
  check(a.rank() == 3 && b.rank() == 3 && a.shape()[1] == b.shape()[1] &&
            a.shape()[2] == b.shape()[2],
        "concat_chan: spatial extents differ");
  int ca = a.shape()[0], cb = b.shape()[0];
  int h = a.shape()[1], w = a.shape()[2];
  Array v(long(ca + cb) * h * w);
  v << a.values(), b.values();
  Tensor out = Tensor::from({ca + cb, h, w}, std::move(v));
  if (g.recording() && (a.needs_grad() || b.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(a);
    g.touch(b);
    g.touch(out);
    auto ad = a.d, bd = b.d, od = out.d;
    long na = a.size();
    g.record([ad, bd, od, na] {
      if (ad->requires_grad || ad->needs_grad)
        grad_acc(ad) += od->grad.head(na);
      if (bd->requires_grad || bd->needs_grad)
        grad_acc(bd) += od->grad.tail(od->grad.size() - na);
    });
  }
  return out;
}

Tensor scale_rows(Graph& g, const Tensor& x, const Tensor& s) {
  check(x.rank() == 2 && s.rank() == 1 && s.shape()[0] == x.shape()[0],
        "scale_rows: shape mismatch");
  int n = x.shape()[0], c = x.shape()[1];
  Tensor out = Tensor::zeros({n, c});
  MapM(out.values().data(), n, c) =
      mat(x).array().colwise() * Eigen::VectorXd::Map(s.values().data(), n).array();
  if (g.recording() && (x.needs_grad() || s.needs_grad())) {
    out.set_needs_grad(true);
    g.touch(x);
    g.touch(s);
    g.touch(out);
    auto xd = x.d, sd = s.d, od = out.d;
    g.record([xd, sd, od, n, c] {
      CMapM go(od->grad.data(), n, c);
      if (xd->requires_grad || xd->needs_grad)
        mat_grad(xd).array() +=
            go.array().colwise() *
            Eigen::VectorXd::Map(sd->values.data(), n).array();
      if (sd->requires_grad || sd->needs_grad)
        Eigen::VectorXd::Map(grad_acc(sd).data(), n).array() +=
            (go.array() * mat_of(xd).array()).rowwise().sum();
    });
  }
  return out;
}

} // namespace hav::diff
