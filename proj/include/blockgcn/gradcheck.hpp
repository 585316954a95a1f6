#pragma once

#include <functional>
#include <string>
#include <vector>

#include "blockgcn/tensor.hpp"

namespace blockgcn {

// A named view over one parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  std::int64_t checked = 0;
  bool passed(double tol) const { return max_rel_error <= tol; }
};

// Central-difference check of analytic gradients. `loss` recomputes the
// scalar objective from the current parameter values; `grads` must already
// hold the analytic gradient at the unperturbed point. Relative error per
// coordinate is |a-n| / max(1, |a|, |n|). When max_coords_per_param > 0 only
// a deterministic stride-spread subset of each tensor is probed.
GradCheckReport gradcheck(const std::vector<ParamRef>& params,
                          const std::function<double()>& loss, double eps = 1e-5,
                          std::int64_t max_coords_per_param = 0);

}  // namespace blockgcn
