#include "blockgcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace blockgcn {

GradCheckReport gradcheck(const std::vector<ParamRef>& params,
                          const std::function<double()>& loss, double eps,
                          std::int64_t max_coords_per_param) {
  GradCheckReport report;
  for (const ParamRef& p : params) {
    Tensor& value = *p.value;
    const Tensor& grad = *p.grad;
    if (!value.same_shape(grad)) {
      throw ShapeError("gradcheck: value/grad shape mismatch for " + p.name);
    }
    const std::int64_t n = value.size();
    std::int64_t step = 1;
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      step = (n + max_coords_per_param - 1) / max_coords_per_param;
    }
    for (std::int64_t i = 0; i < n; i += step) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = loss();
      value[i] = orig - eps;
      const double down = loss();
      value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad[i];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace blockgcn
