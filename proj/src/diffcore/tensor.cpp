#include "hav/diffcore/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace hav::diff {

namespace {
std::atomic<long> next_id{1};
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "}";
  return os.str();
}

Tensor Tensor::from(Shape shape, Array values, bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " elements");
  Tensor t;
  t.d = std::make_shared<TensorData>();
  t.d->shape = std::move(shape);
  t.d->values = std::move(values);
  t.d->requires_grad = requires_grad;
  t.d->id = next_id.fetch_add(1);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  long n = shape_size(shape);
  return from(std::move(shape), Array::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double v) {
  long n = shape_size(shape);
  return from(std::move(shape), Array::Constant(n, v), false);
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

double Tensor::value() const {
  if (size() != 1) throw ContractError("value(): tensor is not scalar");
  return d->values[0];
}

const Array& Tensor::grad() const {
  if (d->grad.size() != d->values.size())
    throw ContractError("grad(): no gradient accumulated for this tensor");
  return d->grad;
}

bool all_finite(const Tensor& t) { return t.values().allFinite(); }

} // namespace hav::diff
