#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssgr/errors.hpp"

namespace ssgr {

/// Row-major dense matrix of 64-bit floats. All pruning and model math runs
/// in f64 regardless of on-disk storage width.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::int64_t rows, std::int64_t cols)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0.0) {
        if (rows <= 0 || cols <= 0) throw DimMismatch("DenseMatrix dims must be positive");
    }

    DenseMatrix(std::int64_t rows, std::int64_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows <= 0 || cols <= 0) throw DimMismatch("DenseMatrix dims must be positive");
        if (data_.size() != static_cast<std::size_t>(rows * cols))
            throw DimMismatch("DenseMatrix data length does not match rows*cols");
    }

    static DenseMatrix identity(std::int64_t n) {
        DenseMatrix m(n, n);
        for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::int64_t rows() const { return rows_; }
    std::int64_t cols() const { return cols_; }

    double& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
    double operator()(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

    double* row_ptr(std::int64_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::int64_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<double> data_;
};

/// Symmetric matrix stored densely; symmetry is checked exactly at
/// construction and preserved by every operation that returns one.
class SpdMatrix {
public:
    SpdMatrix() = default;

    explicit SpdMatrix(std::int64_t dim)
        : dim_(dim), data_(static_cast<std::size_t>(dim * dim), 0.0) {
        if (dim <= 0) throw DimMismatch("SpdMatrix dim must be positive");
    }

    SpdMatrix(std::int64_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
        if (dim <= 0) throw DimMismatch("SpdMatrix dim must be positive");
        if (data_.size() != static_cast<std::size_t>(dim * dim))
            throw DimMismatch("SpdMatrix data length does not match dim*dim");
        check_symmetric();
    }

    static SpdMatrix identity(std::int64_t n) {
        SpdMatrix m(n);
        for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static SpdMatrix diagonal(std::vector<double> diag) {
        SpdMatrix m(static_cast<std::int64_t>(diag.size()));
        for (std::int64_t i = 0; i < m.dim_; ++i) m(i, i) = diag[static_cast<std::size_t>(i)];
        return m;
    }

    static SpdMatrix from_dense(const DenseMatrix& d) {
        if (d.rows() != d.cols()) throw DimMismatch("SpdMatrix requires a square matrix");
        return SpdMatrix(d.rows(), d.data());
    }

    std::int64_t dim() const { return dim_; }

    double& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * dim_ + c)]; }
    double operator()(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * dim_ + c)]; }

    const double* row_ptr(std::int64_t r) const { return data_.data() + r * dim_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    DenseMatrix to_dense() const { return DenseMatrix(dim_, dim_, data_); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double mean_diagonal() const {
        double s = 0.0;
        for (std::int64_t i = 0; i < dim_; ++i) s += (*this)(i, i);
        return s / static_cast<double>(dim_);
    }

private:
    void check_symmetric() const {
        for (std::int64_t i = 0; i < dim_; ++i)
            for (std::int64_t j = i + 1; j < dim_; ++j)
                if ((*this)(i, j) != (*this)(j, i))
                    throw DimMismatch("SpdMatrix data is not exactly symmetric at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
    }

    std::int64_t dim_ = 0;
    std::vector<double> data_;
};

inline double frobenius_norm(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

} // namespace ssgr
