#include "hav/diffcore/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace hav::diff {

GradCheckResult grad_check(const std::string& name,
                           const std::vector<Tensor>& leaves,
                           const std::function<Tensor(Graph&)>& scalar_fn,
                           double eps, double tol) {
  GradCheckResult res;
  res.name = name;
  res.tol = tol;

  Graph g;
  Tensor loss = scalar_fn(g);
  GradientMap grads = g.backward(loss);

  auto eval = [&]() {
    Graph ng(Graph::NoGrad);
    return scalar_fn(ng).value();
  };

  for (size_t li = 0; li < leaves.size(); ++li) {
    const Tensor& leaf = leaves[li];
    Array analytic = grads.dense(leaf.id(), leaf.size());
    Array& vals = leaf.d->values;
    for (long i = 0; i < vals.size(); ++i) {
      double saved = vals[i];
      vals[i] = saved + eps;
      double fp = eval();
      vals[i] = saved - eps;
      double fm = eval();
      vals[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[i];
      double rel = std::abs(a - numeric) /
                   std::max(1.0, std::abs(a) + std::abs(numeric));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        std::ostringstream os;
        os << "leaf " << li << "[" << i << "] analytic=" << a
           << " numeric=" << numeric;
        res.worst = os.str();
      }
    }
  }
  res.pass = res.max_rel_err <= tol && std::isfinite(res.max_rel_err);
  return res;
}

} // namespace hav::diff
