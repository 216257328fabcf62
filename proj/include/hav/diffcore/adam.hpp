#pragma once

#include "hav/diffcore/graph.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace hav::diff {

struct NamedParam {
  std::string name;
  Tensor t;
};
using ParamList = std::vector<NamedParam>;

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const ParamList& params, const GradientMap& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  struct State {
    Array m, v;
    long step = 0;
  };
  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<long, State> state_;
};

} // namespace hav::diff
