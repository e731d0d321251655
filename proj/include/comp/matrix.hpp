#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "comp/errors.hpp"

namespace comp {

/// Dense row-major matrix of 64-bit floats. All numerical work happens in
/// f64 even though checkpoints store f32; condition numbers are sensitive
/// to rounding near the smallest eigenvalue.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    /// Validating constructor: rejects size mismatch and non-finite entries.
    static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> values) {
        if (values.size() != rows * cols) {
            throw DimensionError("matrix data length " + std::to_string(values.size()) +
                                 " does not match " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
        }
        Matrix m;
        m.rows_ = rows;
        m.cols_ = cols;
        m.data_ = std::move(values);
        m.ensure_finite("matrix");
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    void ensure_finite(const std::string& what) const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw Error("non-finite value in " + what);
            }
        }
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Dense vector of 64-bit floats.
class Vector {
  public:
    Vector() = default;
    explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
    Vector(std::initializer_list<double> values) : data_(values) {}

    static Vector from_data(std::vector<double> values) {
        Vector v;
        v.data_ = std::move(values);
        v.ensure_finite("vector");
        return v;
    }

    static Vector ones(std::size_t len) { return Vector(len, 1.0); }

    std::size_t len() const { return data_.size(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void ensure_finite(const std::string& what) const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw Error("non-finite value in " + what);
            }
        }
    }

    const std::vector<double>& values() const { return data_; }

  private:
    std::vector<double> data_;
};

}  // namespace comp
