#include "xalign/numeric/grad_check.h"

#include <algorithm>
#include <cmath>

#include "xalign/error.h"

namespace xalign {

std::vector<double> numeric_gradient(const ScalarFn& loss, std::span<const double> params,
                                     double h) {
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double plus = loss(p);
    p[i] = orig - h;
    const double minus = loss(p);
    p[i] = orig;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double grad_check(const ScalarFn& loss, std::span<const double> params,
                  std::span<const double> analytic, double h) {
  if (analytic.size() != params.size())
    throw NumericError("grad_check: gradient length differs from parameter count");
  const std::vector<double> numeric = numeric_gradient(loss, params, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double rel = std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace xalign
