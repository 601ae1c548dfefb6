#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tppo/window_mlp.hpp"

namespace tppo {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, abs_floor). The floor keeps coordinates whose
/// true gradient is ~0 from reporting pure roundoff as relative error.
double relative_error(double analytic, double numeric, double abs_floor = 1e-6);

/// Central differences of `loss` at `theta` over the listed coordinates,
/// compared to `analytic`.
GradCheckReport check_gradient(const std::function<double(std::span<const double>)>& loss,
                               std::span<const double> theta, std::span<const double> analytic,
                               const nn::ParamLayout& layout,
                               std::span<const std::size_t> coords, double step = 1e-5,
                               double tolerance = 1e-4);

}  // namespace tppo
