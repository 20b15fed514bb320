#include "odekin/finite_diff.hpp"

#include <cmath>
#include <string>

#include "odekin/errors.hpp"

namespace odekin {

std::vector<double> finite_diff_gradient(const ScalarFn& f, std::span<const double> theta,
                                         double step) {
  if (!(step > 0.0)) {
    throw ConfigError("finite_diff_gradient: step must be positive");
  }
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double fp = f(point);
    point[i] = saved - step;
    const double fm = f(point);
    point[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("finite_diff_gradient: non-finite objective at coordinate " +
                            std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace odekin
