#pragma once

#include <functional>
#include <span>
#include <vector>

namespace odekin {

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central-difference gradient (f(x + s e_i) - f(x - s e_i)) / (2 s) per
/// coordinate. Independent of the tape; used as the gradient oracle.
std::vector<double> finite_diff_gradient(const ScalarFn& f, std::span<const double> theta,
                                         double step);

}  // namespace odekin
