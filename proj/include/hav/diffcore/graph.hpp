#pragma once

#include "hav/diffcore/tensor.hpp"

#include <functional>
#include <map>
#include <unordered_set>

namespace hav::diff {

// Gradients of a single backward pass, keyed by leaf tensor id.
class GradientMap {
 public:
  bool contains(long id) const { return grads_.count(id) != 0; }
  const Tensor& at(long id) const;
  // Zero tensor of the given shape when the leaf was never reached.
  Array dense(long id, long size) const;
  const std::map<long, Tensor>& all() const { return grads_; }
  void put(long id, Tensor g) { grads_[id] = std::move(g); }

 private:
  std::map<long, Tensor> grads_;
};

// Reverse-mode tape. Ops append backward records in execution order; the
// records therefore form a topological order of the op DAG and the backward
// sweep visits each node exactly once, in reverse. Accumulation order is
// fixed, so repeated backward calls on the same tape produce identical
// results and runs are reproducible bitwise under a fixed seed.
//
// A NoGrad graph records nothing; use it for forward-only evaluation
// (e.g. the coarse sampling pass).
class Graph {
 public:
  enum Mode { Grad, NoGrad };
  explicit Graph(Mode mode = Grad) : mode_(mode) {}

  bool recording() const { return mode_ == Grad; }
  void record(std::function<void()> backward_step);
  void touch(const Tensor& t);
  size_t num_nodes() const { return nodes_.size(); }

  // Backward from a scalar loss: zeroes gradients of every tensor this tape
  // touched, seeds d(loss)/d(loss)=1, replays records in reverse, and
  // returns gradients of all requires_grad leaves the tape saw. Leaves the
  // loss does not reach come back as zeros.
  GradientMap backward(const Tensor& loss);

 private:
  Mode mode_;
  std::vector<std::function<void()>> nodes_;
  std::vector<std::shared_ptr<TensorData>> touched_;
  std::unordered_set<const TensorData*> seen_;
};

// Ensures grad storage exists and returns it for accumulation.
Array& grad_acc(const std::shared_ptr<TensorData>& d);

} // namespace hav::diff
