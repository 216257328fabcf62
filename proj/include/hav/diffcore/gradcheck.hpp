#pragma once

#include "hav/diffcore/graph.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hav::diff {

// Central finite differences against the tape gradient. The checked
// function must rebuild its graph from the given leaves on every call so
// perturbed evaluations see fresh forward passes.
struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string worst; // leaf/index of the worst entry
};

struct GradCheckReport {
  std::vector<GradCheckResult> results;
  bool all_pass() const {
    for (const auto& r : results)
      if (!r.pass) return false;
    return true;
  }
};

// leaves: the requires_grad tensors to probe. scalar_fn: builds the graph
// and returns the scalar loss. Relative error uses |a-n| / max(1, |a|+|n|).
GradCheckResult grad_check(const std::string& name,
                           const std::vector<Tensor>& leaves,
                           const std::function<Tensor(Graph&)>& scalar_fn,
                           double eps = 1e-5, double tol = 1e-4);

// The default suite run by the `gradcheck` CLI subcommand: every
// differentiable op in the library on small seeded instances.
GradCheckReport gradcheck_default_suite(bool verbose);

} // namespace hav::diff
