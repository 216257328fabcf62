#include "hav/diffcore/adam.hpp"

#include <cmath>

namespace hav::diff {

void Adam::step(const ParamList& params, const GradientMap& grads) {
  for (const auto& p : params) {
    Array g = grads.dense(p.t.id(), p.t.size());
    State& st = state_[p.t.id()];
    if (st.m.size() != g.size()) {
      st.m = Array::Zero(g.size());
      st.v = Array::Zero(g.size());
      st.step = 0;
    }
    st.step += 1;
    st.m = beta1_ * st.m + (1.0 - beta1_) * g;
    st.v = beta2_ * st.v + (1.0 - beta2_) * g.square();
    double c1 = 1.0 - std::pow(beta1_, double(st.step));
    double c2 = 1.0 - std::pow(beta2_, double(st.step));
    p.t.d->values -= lr_ * (st.m / c1) / ((st.v / c2).sqrt() + eps_);
  }
}

} // namespace hav::diff
