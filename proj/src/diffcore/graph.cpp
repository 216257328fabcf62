#include "hav/diffcore/graph.hpp"

namespace hav::diff {

const Tensor& GradientMap::at(long id) const {
  auto it = grads_.find(id);
  if (it == grads_.end())
    throw ContractError("GradientMap: no entry for id " + std::to_string(id));
  return it->second;
}

Array GradientMap::dense(long id, long size) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) return Array::Zero(size);
  return it->second.values();
}

Array& grad_acc(const std::shared_ptr<TensorData>& d) {
  if (d->grad.size() != d->values.size())
    d->grad = Array::Zero(d->values.size());
  return d->grad;
}

void Graph::record(std::function<void()> backward_step) {
  if (mode_ == Grad) nodes_.push_back(std::move(backward_step));
}

void Graph::touch(const Tensor& t) {
  if (mode_ != Grad) return;
  if (seen_.insert(t.d.get()).second) touched_.push_back(t.d);
}

GradientMap Graph::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  if (mode_ != Grad)
    throw ContractError("backward: graph was created in NoGrad mode");
  for (auto& d : touched_) grad_acc(d).setZero();
  grad_acc(loss.d)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();

  GradientMap out;
  for (auto& d : touched_) {
    if (!d->requires_grad) continue;
    Tensor g = Tensor::from(d->shape, grad_acc(d), false);
    out.put(d->id, std::move(g));
  }
  return out;
}

} // namespace hav::diff
