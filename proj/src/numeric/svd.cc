#include "xalign/numeric/svd.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "xalign/error.h"

namespace xalign {

namespace {

constexpr int kMaxSweeps = 80;

// Columns of `a` (r×c, r ≥ c) are rotated in place until mutually orthogonal;
// the same rotations accumulate into `v`.
void orthogonalize_columns(Matrix& a, Matrix& v) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const double tol = std::numeric_limits<double>::epsilon();
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) total += a(i, j) * a(i, j);
  // Columns below this squared norm are roundoff and never rotated.
  const double negligible = total * std::pow(tol * static_cast<double>(rows + cols), 2);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        if (alpha <= negligible || beta <= negligible) continue;
        rotated = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < cols; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError("svd: Jacobi sweeps did not converge");
}

// Replaces the columns of u flagged in `missing` by unit vectors orthogonal
// to every other column, drawing candidates from the standard basis.
void complete_basis(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t rows = u.rows();
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (!missing[j]) continue;
    for (;;) {
      if (next_basis >= rows) throw NumericError("svd: cannot complete orthonormal basis");
      std::vector<double> cand(rows, 0.0);
      cand[next_basis++] = 1.0;
      // Two Gram-Schmidt passes for numerical orthogonality.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.cols(); ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < rows; ++i) proj += u(i, k) * cand[i];
          for (std::size_t i = 0; i < rows; ++i) cand[i] -= proj * u(i, k);
        }
      }
      const double len = norm(cand);
      if (len < 1e-8) continue;
      for (std::size_t i = 0; i < rows; ++i) u(i, j) = cand[i] / len;
      break;
    }
  }
}

Svd svd_tall(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  Matrix a = m;
  Matrix v = Matrix::identity(cols);
  orthogonalize_columns(a, v);

  std::vector<double> sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(s);
  }

  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  Svd out{Matrix(rows, cols), std::vector<double>(cols), Matrix(cols, cols)};
  double total = 0.0;
  for (double x : sigma) total += x * x;
  // Matches the rotation threshold in orthogonalize_columns.
  const double cutoff = std::sqrt(total) * static_cast<double>(rows + cols) *
                        std::numeric_limits<double>::epsilon();
  std::vector<bool> missing(cols, false);
  for (std::size_t k = 0; k < cols; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sigma[j];
    for (std::size_t i = 0; i < cols; ++i) out.v(i, k) = v(i, j);
    if (sigma[j] <= cutoff || sigma[j] == 0.0) {
      missing[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = a(i, j) / sigma[j];
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
    complete_basis(out.u, missing);
  }
  return out;
}

}  // namespace

Svd svd(const Matrix& m) {
  if (!m.all_finite()) throw NumericError("svd: input has non-finite entries");
  if (m.rows() >= m.cols()) return svd_tall(m);
  Svd t = svd_tall(m.transposed());
  return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
}

}  // namespace xalign
