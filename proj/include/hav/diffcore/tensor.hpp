#pragma once

#include <Eigen/Core>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hav::diff {

// Flat dense storage. All tensors are double precision; shapes are logical
// row-major extents over the flat array.
using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline long shape_size(const Shape& s) {
  long n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  Array values;
  Array grad;                 // allocated lazily, same length as values
  bool requires_grad = false; // learnable leaf
  bool needs_grad = false;    // gradient must propagate into this tensor
  long id = 0;
};

// Value-semantic handle to shared tensor storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, Array values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  bool valid() const { return d != nullptr; }
  const Shape& shape() const { return d->shape; }
  long size() const { return d->values.size(); }
  int rank() const { return static_cast<int>(d->shape.size()); }
  long id() const { return d->id; }

  Array& values() { return d->values; }
  const Array& values() const { return d->values; }
  double value() const; // scalar tensors only

  bool requires_grad() const { return d->requires_grad; }
  bool needs_grad() const { return d->needs_grad || d->requires_grad; }
  void set_needs_grad(bool b) { d->needs_grad = b; }

  // Gradient as accumulated by the most recent Graph::backward.
  const Array& grad() const;

  std::shared_ptr<TensorData> d;
};

bool all_finite(const Tensor& t);

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

} // namespace hav::diff
