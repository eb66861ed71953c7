#pragma once

#include <functional>
#include <span>
#include <vector>

namespace xalign {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference gradient, (f(p+h·eᵢ) − f(p−h·eᵢ)) / 2h per coordinate.
std::vector<double> numeric_gradient(const ScalarFn& loss, std::span<const double> params,
                                     double h = 1e-5);

// Max over coordinates of |a − n| / max(1e-8, |a| + |n|), where a is the
// analytic gradient and n the central-difference estimate.
double grad_check(const ScalarFn& loss, std::span<const double> params,
                  std::span<const double> analytic, double h = 1e-5);

}  // namespace xalign
