#pragma once

#include <cmath>

#include "ssgr/matrix.hpp"

namespace ssgr::linalg {

/// Unblocked Cholesky factorization h = L * L^T.
///
/// Returns the lower-triangular factor; entries above the diagonal are
/// exactly zero. Throws NotPositiveDefinite when a pivot falls at or below
/// 1e-12 times the largest diagonal entry, which separates genuine
/// indefiniteness from rounding noise at the scales this toolkit works at.
inline DenseMatrix cholesky(const SpdMatrix& h) {
    const std::int64_t n = h.dim();
    double max_diag = 0.0;
    for (std::int64_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(h(i, i)));
    const double pivot_floor = 1e-12 * max_diag;

    DenseMatrix l(n, n);
    for (std::int64_t j = 0; j < n; ++j) {
        double d = h(j, j);
        const double* lj = l.row_ptr(j);
        for (std::int64_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
        if (!(d > pivot_floor) || d <= 0.0)
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(d) + " at column " +
                                      std::to_string(j));
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::int64_t i = j + 1; i < n; ++i) {
            double s = h(i, j);
            const double* li = l.row_ptr(i);
            for (std::int64_t k = 0; k < j; ++k) s -= li[k] * lj[k];
            l(i, j) = s / ljj;
        }
    }
    return l;
}

/// Inverse of a lower-triangular matrix by forward substitution.
inline DenseMatrix invert_lower_triangular(const DenseMatrix& l) {
    const std::int64_t n = l.rows();
    DenseMatrix inv(n, n);
    for (std::int64_t j = 0; j < n; ++j) {
        inv(j, j) = 1.0 / l(j, j);
        for (std::int64_t i = j + 1; i < n; ++i) {
            double s = 0.0;
            const double* li = l.row_ptr(i);
            for (std::int64_t k = j; k < i; ++k) s -= li[k] * inv(k, j);
            inv(i, j) = s / l(i, i);
        }
    }
    return inv;
}

/// SPD inverse via Cholesky: h^-1 = L^-T * L^-1, assembled symmetrically so
/// the result satisfies the SpdMatrix exact-symmetry invariant.
inline SpdMatrix spd_inverse(const SpdMatrix& h) {
    const std::int64_t n = h.dim();
    const DenseMatrix linv = invert_lower_triangular(cholesky(h));
    SpdMatrix out(n);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = i; j < n; ++j) {
            // (L^-T L^-1)[i][j] = sum_k linv[k][i] * linv[k][j], k >= max(i,j)
            double s = 0.0;
            for (std::int64_t k = j; k < n; ++k) s += linv(k, i) * linv(k, j);
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

/// h + lambda * I with lambda = lambda_frac * mean(diag(h)).
inline SpdMatrix dampen(const SpdMatrix& h, double lambda_frac) {
    if (lambda_frac < 0.0) throw ValidationError("dampen: lambda_frac must be nonnegative");
    SpdMatrix out = h;
    const double lambda = lambda_frac * h.mean_diagonal();
    for (std::int64_t i = 0; i < h.dim(); ++i) out(i, i) += lambda;
    return out;
}

} // namespace ssgr::linalg
