#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "hbvm/error.hpp"

namespace hbvm {

using Vector = std::vector<double>;

/// Small dense row-major matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    DenseMatrix(std::initializer_list<std::initializer_list<double>> init)
        : rows_(init.size()), cols_(init.size() ? init.begin()->size() : 0) {
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) {
                throw DimensionError("DenseMatrix: ragged initializer");
            }
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static DenseMatrix diagonal(std::span<const double> d) {
        DenseMatrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    DenseMatrix transpose() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    /// Infinity norm (max absolute row sum).
    double norm_inf() const {
        double m = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (double v : row(i)) s += std::abs(v);
            m = std::max(m, s);
        }
        return m;
    }

    double norm_one() const { return transpose().norm_inf(); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
        return t;
    }

    DenseMatrix& operator+=(const DenseMatrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    DenseMatrix& operator-=(const DenseMatrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    DenseMatrix& operator*=(double a) {
        for (double& v : data_) v *= a;
        return *this;
    }

    friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
    friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
    friend DenseMatrix operator*(double a, DenseMatrix m) { return m *= a; }

    friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
        if (a.cols_ != b.rows_) throw DimensionError("DenseMatrix: product dimension mismatch");
        DenseMatrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t l = 0; l < a.cols_; ++l) {
                const double ail = a(i, l);
                if (ail == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += ail * b(l, j);
            }
        return c;
    }

    Vector apply(std::span<const double> x) const {
        if (x.size() != cols_) throw DimensionError("DenseMatrix: apply dimension mismatch");
        Vector y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) acc += (*this)(i, j) * x[j];
            y[i] = acc;
        }
        return y;
    }

private:
    void check_same(const DenseMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw DimensionError("DenseMatrix: shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline double norm_inf(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace hbvm
