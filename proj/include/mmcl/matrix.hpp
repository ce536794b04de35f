#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "mmcl/error.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

// Dense row-major 64-bit matrix. Values are treated as immutable once a
// public operation returns them; ops allocate fresh storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw_shape("Matrix: negative dimension");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = static_cast<int>(init.size());
    cols_ = rows_ ? static_cast<int>(init.begin()->size()) : 0;
    data_.reserve(static_cast<size_t>(rows_) * cols_);
    for (const auto& row : init) {
      if (static_cast<int>(row.size()) != cols_)
        throw_shape("Matrix: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix zeros(int rows, int cols) { return Matrix(rows, cols, 0.0); }
  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix random_uniform(int rows, int cols, double lo, double hi, Rng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = rng.uniform(lo, hi);
    return m;
  }
  static Matrix random_normal(int rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = scale * rng.normal();
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

  double* row_ptr(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
  const double* row_ptr(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
inline void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw_shape(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace detail

// c = a * b. Plain ikj loop: accumulation order over k is fixed, so results
// are run-to-run deterministic.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw_shape("matmul: inner dimensions disagree, " + a.shape_str() + " * " + b.shape_str());
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double* crow = c.row_ptr(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (int j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// c = a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw_shape("matmul_nt: inner dimensions disagree, " + a.shape_str() + " * " +
                b.shape_str() + "^T");
  Matrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    for (int j = 0; j < b.rows(); ++j) {
      const double* brow = b.row_ptr(j);
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

// c = a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw_shape("matmul_tn: inner dimensions disagree, " + a.shape_str() + "^T * " +
                b.shape_str());
  Matrix c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.row_ptr(i);
      for (int j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  detail::check_same_shape(a, b, "add");
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  detail::check_same_shape(a, b, "sub");
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  detail::check_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

inline Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  for (double& x : out.data()) x *= c;
  return out;
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  detail::check_same_shape(a, b, "add_in_place");
  for (size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

// Threshold below which a row is treated as a collapsed (zero) embedding.
constexpr double kDegenerateNorm = 1e-12;

// Each output row has unit Euclidean norm. A near-zero row is a hard error:
// silently clamping would mask encoder collapse.
inline Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (int i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    const double* row = x.row_ptr(i);
    for (int j = 0; j < x.cols(); ++j) s += row[j] * row[j];
    double norm = std::sqrt(s);
    if (norm < kDegenerateNorm)
      throw_numeric("l2_normalize_rows: degenerate embedding, row " + std::to_string(i) +
                    " has norm " + std::to_string(norm));
    double* orow = out.row_ptr(i);
    for (int j = 0; j < x.cols(); ++j) orow[j] /= norm;
  }
  return out;
}

// Entry (i,j) is the cosine similarity between row i of zm and row j of zn.
inline Matrix cosine_similarity_matrix(const Matrix& zm, const Matrix& zn) {
  detail::check_same_shape(zm, zn, "cosine_similarity_matrix");
  return matmul_nt(l2_normalize_rows(zm), l2_normalize_rows(zn));
}

// Row-wise log sum exp with max-subtraction. mask (same shape, entries 0/1)
// selects the included terms; a fully masked row is an error.
inline std::vector<double> log_sum_exp_row(const Matrix& x, const Matrix* mask = nullptr) {
  if (mask) detail::check_same_shape(x, *mask, "log_sum_exp_row");
  std::vector<double> out(static_cast<size_t>(x.rows()));
  for (int i = 0; i < x.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < x.cols(); ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      m = std::max(m, x(i, j));
    }
    if (!std::isfinite(m))
      throw_numeric("log_sum_exp_row: empty denominator, row " + std::to_string(i) +
                    " has no included entries");
    double s = 0.0;
    for (int j = 0; j < x.cols(); ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      s += std::exp(x(i, j) - m);
    }
    out[i] = m + std::log(s);
  }
  return out;
}

inline double sum_all(const Matrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return s;
}

inline Matrix col_sum(const Matrix& a) {
  Matrix out(1, a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    for (int j = 0; j < a.cols(); ++j) out(0, j) += row[j];
  }
  return out;
}

inline Matrix mean_rows(const Matrix& a) {
  if (a.rows() == 0) throw_shape("mean_rows: empty matrix");
  Matrix out = col_sum(a);
  for (double& x : out.data()) x /= a.rows();
  return out;
}

inline Matrix relu(const Matrix& a) {
  Matrix out = a;
  for (double& x : out.data()) x = std::max(0.0, x);
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  detail::check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.all_finite()) throw_numeric(std::string(what) + ": non-finite values");
}

}  // namespace mmcl
