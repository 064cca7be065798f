// Copyright 2026 The FedPower Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDPOWER_LINALG_HPP_
#define FEDPOWER_LINALG_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fedpower/errors.hpp"
#include "fedpower/rng.hpp"

namespace fedpower {

// Dense row-major matrix of 64-bit reals. The universal carrier for weights,
// updates and noise. Entries are expected to stay finite; validate() is used
// at trust boundaries (file input, external data).
class DenseMatrix {
 public:
  DenseMatrix() : rows_(0), cols_(0) {}

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("DenseMatrix: data length " +
                       std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void validate(const char* where) const {
    if (!all_finite()) {
      throw DomainError(std::string(where) + ": non-finite entry");
    }
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

// Standard matrix product. Accumulates along k in the middle loop so the
// inner loop walks both operands row-major.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = &c.data()[i * n];
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = &b.data()[k * n];
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("operator+: shape mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("operator-: shape mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline DenseMatrix operator*(double s, const DenseMatrix& m) {
  DenseMatrix c = m;
  for (double& v : c.data()) v *= s;
  return c;
}

inline double frobenius_norm(const DenseMatrix& m) {
  double sum = 0.0;
  for (double v : m.data()) sum += v * v;
  return std::sqrt(sum);
}

// i.i.d. N(0, stddev^2) entries. stddev == 0 yields the exact zero matrix
// without consuming any draws.
inline DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols,
                                   double stddev, RngStream& rng) {
  if (stddev < 0.0) throw DomainError("gaussian_matrix: negative stddev");
  DenseMatrix m(rows, cols);
  if (stddev == 0.0) return m;
  for (double& v : m.data()) v = rng.gaussian(stddev);
  return m;
}

struct OrthoResult {
  DenseMatrix basis;
  // Set when a pivot norm fell below the deficiency threshold and the
  // direction was replaced with a fresh random draw.
  bool rank_deficient = false;
};

namespace detail {

inline constexpr double kDeficiencyThreshold = 1e-12;

// Modified Gram-Schmidt over columns with one re-orthogonalization pass.
// Rank-deficient pivots are replaced by fresh Gaussian draws from `rng`
// so downstream iterations always receive a full orthonormal basis.
inline OrthoResult mgs_columns(const DenseMatrix& m, RngStream& rng) {
  const std::size_t rows = m.rows(), cols = m.cols();
  if (rows < cols) {
    throw ShapeError("orthonormalize_columns: rows " + std::to_string(rows) +
                     " < cols " + std::to_string(cols));
  }
  OrthoResult out;
  out.basis = m;
  DenseMatrix& q = out.basis;
  std::vector<double> v(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) v[i] = q(i, j);
    for (int attempt = 0;; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < j; ++p) {
          double dot = 0.0;
          for (std::size_t i = 0; i < rows; ++i) dot += q(i, p) * v[i];
          for (std::size_t i = 0; i < rows; ++i) v[i] -= dot * q(i, p);
        }
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < rows; ++i) norm += v[i] * v[i];
      norm = std::sqrt(norm);
      if (norm >= kDeficiencyThreshold) {
        for (std::size_t i = 0; i < rows; ++i) q(i, j) = v[i] / norm;
        break;
      }
      out.rank_deficient = true;
      if (attempt >= 16) {
        throw DomainError("orthonormalize_columns: replacement draws failed");
      }
      for (std::size_t i = 0; i < rows; ++i) v[i] = rng.gaussian(1.0);
    }
  }
  return out;
}

}  // namespace detail

// Returns Q with Q^T Q = I and the same column span as the input when it has
// full column rank. Requires rows >= cols.
inline OrthoResult orthonormalize_columns(const DenseMatrix& m,
                                          RngStream& rng) {
  return detail::mgs_columns(m, rng);
}

// Row-space counterpart: Q Q^T = I, row span preserved under full row rank.
// Requires cols >= rows.
inline OrthoResult orthonormalize_rows(const DenseMatrix& m, RngStream& rng) {
  if (m.cols() < m.rows()) {
    throw ShapeError("orthonormalize_rows: cols " + std::to_string(m.cols()) +
                     " < rows " + std::to_string(m.rows()));
  }
  OrthoResult t = detail::mgs_columns(transpose(m), rng);
  return {transpose(t.basis), t.rank_deficient};
}

}  // namespace fedpower

#endif  // FEDPOWER_LINALG_HPP_
