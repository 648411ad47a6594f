#include "gate/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gate/error.hpp"

namespace gate {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged row " + std::to_string(i));
    std::copy(row.begin(), row.end(), m.row(i).begin());
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(values.size(), 1);
  std::copy(values.begin(), values.end(), m.data().begin());
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + a.shape_string() + " and " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace {

void softmax_into(std::span<const double> in, std::span<double> out) {
  const double mx = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
}

}  // namespace

Vector softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax: empty input");
  Vector out(v.size());
  softmax_into(v, out);
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  if (m.cols() == 0) throw ShapeError("softmax_rows: matrix has zero columns");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) softmax_into(m.row(r), out.row(r));
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> v, const std::string& what) {
  if (!all_finite(v)) throw NumericError("non-finite value in " + what);
}

void gemv(const Matrix& w, std::span<const double> x, std::span<double> y, bool accumulate) {
  if (w.cols() != x.size() || w.rows() != y.size()) {
    throw ShapeError("gemv: W" + w.shape_string() + " x[" + std::to_string(x.size()) + "] -> y[" +
                     std::to_string(y.size()) + "]");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double v = dot(w.row(r), x);
    y[r] = accumulate ? y[r] + v : v;
  }
}

void gemv_t(const Matrix& w, std::span<const double> x, std::span<double> y, bool accumulate) {
  if (w.rows() != x.size() || w.cols() != y.size()) {
    throw ShapeError("gemv_t: W" + w.shape_string() + " x[" + std::to_string(x.size()) +
                     "] -> y[" + std::to_string(y.size()) + "]");
  }
  if (!accumulate) std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (x[r] != 0.0) axpy(x[r], w.row(r), y);
  }
}

void add_outer(Matrix& w, std::span<const double> x, std::span<const double> y, double alpha) {
  if (w.rows() != x.size() || w.cols() != y.size()) {
    throw ShapeError("add_outer: W" + w.shape_string() + " vs x[" + std::to_string(x.size()) +
                     "] y[" + std::to_string(y.size()) + "]");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (x[r] != 0.0) axpy(alpha * x[r], y, w.row(r));
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace gate
