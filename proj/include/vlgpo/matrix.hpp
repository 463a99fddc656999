#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlgpo {

/// Dense row-major matrix of doubles. Rows are batch items throughout the library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) throw std::invalid_argument("Matrix: data size mismatch");
    }

    static Matrix row_vector(std::span<const double> values) {
        return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    /// Rows [begin, begin + count) as a new matrix.
    Matrix slice_rows(std::size_t begin, std::size_t count) const {
        Matrix out(count, cols_);
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_), count * cols_,
                    out.data_.begin());
        return out;
    }

    void set_rows(std::size_t begin, const Matrix& src) {
        assert(src.cols_ == cols_ && begin + src.rows_ <= rows_);
        std::copy(src.data_.begin(), src.data_.end(),
                  data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_));
    }

    Matrix& operator+=(const Matrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    /// this += s * o
    void add_scaled(const Matrix& o, double s) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    void check_same(const Matrix& o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_)
            throw std::invalid_argument("Matrix: shape mismatch " + std::to_string(rows_) + "x" +
                                        std::to_string(cols_) + " vs " + std::to_string(o.rows_) +
                                        "x" + std::to_string(o.cols_));
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

/// Row-wise softmax over consecutive groups of `group` columns (one group per sequence position).
inline Matrix softmax_groups(const Matrix& x, std::size_t group) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        for (std::size_t g = 0; g < x.cols(); g += group) {
            double mx = in[g];
            for (std::size_t k = 1; k < group; ++k) mx = std::max(mx, in[g + k]);
            double sum = 0.0;
            for (std::size_t k = 0; k < group; ++k) {
                out[g + k] = std::exp(in[g + k] - mx);
                sum += out[g + k];
            }
            for (std::size_t k = 0; k < group; ++k) out[g + k] /= sum;
        }
    }
    return y;
}

/// Vector-Jacobian product of softmax_groups given its output `y`.
inline Matrix softmax_groups_backward(const Matrix& y, const Matrix& dy, std::size_t group) {
    Matrix dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto dyr = dy.row(r);
        auto dxr = dx.row(r);
        for (std::size_t g = 0; g < y.cols(); g += group) {
            double dot = 0.0;
            for (std::size_t k = 0; k < group; ++k) dot += yr[g + k] * dyr[g + k];
            for (std::size_t k = 0; k < group; ++k) dxr[g + k] = yr[g + k] * (dyr[g + k] - dot);
        }
    }
    return dx;
}

}  // namespace vlgpo
