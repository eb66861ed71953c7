#pragma once

#include <vector>

#include "xalign/numeric/matrix.h"

namespace xalign {

// Thin SVD: m (r×c) = u · diag(s) · vᵀ with k = min(r, c), u r×k, v c×k.
// Singular values are non-negative and sorted in descending order; u and v
// always have orthonormal columns, including for rank-deficient input.
struct Svd {
  Matrix u;
  std::vector<double> s;
  Matrix v;
};

// One-sided Jacobi (Hestenes). Throws NumericError on non-finite input or if
// the sweeps fail to converge.
Svd svd(const Matrix& m);

}  // namespace xalign
