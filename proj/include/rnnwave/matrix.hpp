// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnwave {

/// Dense single-precision matrix, column-major, leading dimension == rows.
/// Element (r, c) lives at data[c * rows + r].
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
      throw std::invalid_argument("Matrix: dimensions must be positive, got " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
    }
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0f);
  }

  /// Builds from a column-major flat initializer.
  static Matrix from_column_major(int rows, int cols, std::initializer_list<float> vals) {
    Matrix m(rows, cols);
    if (vals.size() != m.data_.size()) {
      throw std::invalid_argument("Matrix::from_column_major: element count mismatch");
    }
    std::size_t i = 0;
    for (float v : vals) m.data_[i++] = v;
    return m;
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  float& operator()(int r, int c) { return data_[idx(r, c)]; }
  float operator()(int r, int c) const { return data_[idx(r, c)]; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(rows_) +
           static_cast<std::size_t>(r);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

/// Mutable view of a column-major block: `ld` strides between columns, so a
/// view can cover a column range, a row block (gate slice), or both. Views
/// alias the underlying storage and never copy.
struct Span {
  float* data = nullptr;
  int rows = 0;
  int cols = 0;
  int ld = 0;

  float& at(int r, int c) const {
    return data[static_cast<std::size_t>(c) * static_cast<std::size_t>(ld) + r];
  }
  float* col(int c) const { return data + static_cast<std::size_t>(c) * ld; }
  bool contiguous() const { return ld == rows; }
};

struct ConstSpan {
  const float* data = nullptr;
  int rows = 0;
  int cols = 0;
  int ld = 0;

  ConstSpan() = default;
  ConstSpan(const Span& s) : data(s.data), rows(s.rows), cols(s.cols), ld(s.ld) {}

  float at(int r, int c) const {
    return data[static_cast<std::size_t>(c) * static_cast<std::size_t>(ld) + r];
  }
  const float* col(int c) const { return data + static_cast<std::size_t>(c) * ld; }
  bool empty() const { return data == nullptr; }
};

inline Span span(Matrix& m) { return Span{m.data(), m.rows(), m.cols(), m.rows()}; }
inline ConstSpan span(const Matrix& m) {
  Span s{const_cast<float*>(m.data()), m.rows(), m.cols(), m.rows()};
  return ConstSpan(s);
}

/// Aliasing view over columns [first_col, first_col + num_cols) of `base`.
/// Writes through the view are visible in the base matrix.
inline Span col_range(Matrix& base, int first_col, int num_cols) {
  if (first_col < 0 || num_cols <= 0 || first_col + num_cols > base.cols()) {
    throw std::out_of_range("col_range: [" + std::to_string(first_col) + ", " +
                            std::to_string(first_col + num_cols) + ") exceeds " +
                            std::to_string(base.cols()) + " columns");
  }
  return Span{base.data() + static_cast<std::size_t>(first_col) * base.rows(), base.rows(),
              num_cols, base.rows()};
}

inline ConstSpan col_range(const Matrix& base, int first_col, int num_cols) {
  return ConstSpan(col_range(const_cast<Matrix&>(base), first_col, num_cols));
}

inline Span col_range(Span base, int first_col, int num_cols) {
  if (first_col < 0 || num_cols <= 0 || first_col + num_cols > base.cols) {
    throw std::out_of_range("col_range: span column range out of bounds");
  }
  return Span{base.data + static_cast<std::size_t>(first_col) * base.ld, base.rows, num_cols,
              base.ld};
}

inline ConstSpan col_range(ConstSpan base, int first_col, int num_cols) {
  if (first_col < 0 || num_cols <= 0 || first_col + num_cols > base.cols) {
    throw std::out_of_range("col_range: span column range out of bounds");
  }
  Span s{const_cast<float*>(base.data) + static_cast<std::size_t>(first_col) * base.ld,
         base.rows, num_cols, base.ld};
  return ConstSpan(s);
}

/// Row block [first_row, first_row + num_rows) of a view; used to address one
/// gate inside a gate-stacked block.
inline Span row_range(Span base, int first_row, int num_rows) {
  if (first_row < 0 || num_rows <= 0 || first_row + num_rows > base.rows) {
    throw std::out_of_range("row_range: span row range out of bounds");
  }
  return Span{base.data + first_row, num_rows, base.cols, base.ld};
}

inline ConstSpan row_range(ConstSpan base, int first_row, int num_rows) {
  if (first_row < 0 || num_rows <= 0 || first_row + num_rows > base.rows) {
    throw std::out_of_range("row_range: span row range out of bounds");
  }
  Span s{const_cast<float*>(base.data) + first_row, num_rows, base.cols, base.ld};
  return ConstSpan(s);
}

/// New matrix with result(c, r) = a(r, c).
inline Matrix transpose(ConstSpan a) {
  Matrix out(a.cols, a.rows);
  for (int c = 0; c < a.cols; ++c) {
    for (int r = 0; r < a.rows; ++r) {
      out(c, r) = a.at(r, c);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) { return transpose(span(a)); }

/// Concatenates parts top-to-bottom; the row offset of part g is the sum of
/// the row counts before it. All parts must share a column count.
inline Matrix stack_rows(const std::vector<const Matrix*>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_rows: no parts");
  const int cols = parts[0]->cols();
  int total_rows = 0;
  for (const Matrix* p : parts) {
    if (p->cols() != cols) {
      throw std::invalid_argument("stack_rows: part has " + std::to_string(p->cols()) +
                                  " cols, expected " + std::to_string(cols));
    }
    total_rows += p->rows();
  }
  Matrix out(total_rows, cols);
  int off = 0;
  for (const Matrix* p : parts) {
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < p->rows(); ++r) {
        out(off + r, c) = (*p)(r, c);
      }
    }
    off += p->rows();
  }
  return out;
}

inline Matrix stack_rows(std::initializer_list<const Matrix*> parts) {
  return stack_rows(std::vector<const Matrix*>(parts));
}

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace rnnwave
