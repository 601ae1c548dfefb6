#include "tppo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tppo {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradient(const std::function<double(std::span<const double>)>& loss,
                               std::span<const double> theta, std::span<const double> analytic,
                               const nn::ParamLayout& layout,
                               std::span<const std::size_t> coords, double step,
                               double tolerance) {
  GradCheckReport rep;
  std::vector<double> probe(theta.begin(), theta.end());
  for (auto i : coords) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = loss(probe);
    probe[i] = saved - step;
    const double down = loss(probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    ++rep.checked;
    if (rep.checked == 1 || err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst_index = i;
      rep.worst_param = layout.describe(i);
      rep.worst_analytic = analytic[i];
      rep.worst_numeric = numeric;
    }
  }
  rep.passed = rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace tppo
