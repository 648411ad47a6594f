#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gate {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  // Column vector (len x 1) holding `values`.
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double value);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Numerically stable softmax (max-subtracted).
Vector softmax(std::span<const double> v);
// Softmax applied independently to every row.
Matrix softmax_rows(const Matrix& m);

double sigmoid(double x);
bool all_finite(std::span<const double> v);
// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(std::span<const double> v, const std::string& what);

// y (+)= W x
void gemv(const Matrix& w, std::span<const double> x, std::span<double> y, bool accumulate = false);
// y (+)= W^T x
void gemv_t(const Matrix& w, std::span<const double> x, std::span<double> y, bool accumulate = false);
// W += alpha * x y^T
void add_outer(Matrix& w, std::span<const double> x, std::span<const double> y, double alpha = 1.0);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace gate
