#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace granet {

/// CSR matrix with sorted column indices per row.
struct SparseMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::size_t> row_ptr;  // n_rows + 1
  std::vector<std::size_t> col;      // nnz
  std::vector<double> val;           // nnz

  static SparseMatrix empty(std::size_t r, std::size_t c) {
    SparseMatrix m;
    m.n_rows = r;
    m.n_cols = c;
    m.row_ptr.assign(r + 1, 0);
    return m;
  }

  std::size_t nnz() const { return col.size(); }

  double coeff(std::size_t r, std::size_t c) const {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      if (col[k] == c) return val[k];
    return 0.0;
  }

  /// y += alpha * A * x for dense row-major x (n_cols x width), y (n_rows x width).
  void add_multiply(const double* x, std::size_t width, double* y, double alpha = 1.0) const {
    for (std::size_t i = 0; i < n_rows; ++i) {
      double* yi = y + i * width;
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        const double a = alpha * val[k];
        const double* xj = x + col[k] * width;
        for (std::size_t c = 0; c < width; ++c) yi[c] += a * xj[c];
      }
    }
  }

  /// y += alpha * A^T * x.
  void add_multiply_transposed(const double* x, std::size_t width, double* y,
                               double alpha = 1.0) const {
    for (std::size_t i = 0; i < n_rows; ++i) {
      const double* xi = x + i * width;
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        const double a = alpha * val[k];
        double* yj = y + col[k] * width;
        for (std::size_t c = 0; c < width; ++c) yj[c] += a * xi[c];
      }
    }
  }

  SparseMatrix transposed() const {
    SparseMatrix t = empty(n_cols, n_rows);
    std::vector<std::size_t> counts(n_cols, 0);
    for (auto c : col) ++counts[c];
    t.row_ptr.resize(n_cols + 1);
    t.row_ptr[0] = 0;
    for (std::size_t i = 0; i < n_cols; ++i) t.row_ptr[i + 1] = t.row_ptr[i] + counts[i];
    t.col.resize(nnz());
    t.val.resize(nnz());
    std::vector<std::size_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::size_t i = 0; i < n_rows; ++i)
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        const std::size_t pos = cursor[col[k]]++;
        t.col[pos] = i;
        t.val[pos] = val[k];
      }
    return t;  // columns stay sorted because source rows are scanned in order
  }
};

/// C = A * B with a dense accumulator per row. Rows of the result carry sorted columns.
inline SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.n_cols != b.n_rows) throw std::invalid_argument("sparse multiply: inner dim mismatch");
  SparseMatrix c = SparseMatrix::empty(a.n_rows, b.n_cols);
  std::vector<double> acc(b.n_cols, 0.0);
  std::vector<char> seen(b.n_cols, 0);
  std::vector<std::size_t> touched;
  touched.reserve(256);
  c.row_ptr[0] = 0;
  for (std::size_t i = 0; i < a.n_rows; ++i) {
    touched.clear();
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      const std::size_t j = a.col[k];
      const double av = a.val[k];
      for (std::size_t l = b.row_ptr[j]; l < b.row_ptr[j + 1]; ++l) {
        const std::size_t jc = b.col[l];
        if (!seen[jc]) {
          seen[jc] = 1;
          touched.push_back(jc);
        }
        acc[jc] += av * b.val[l];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto j : touched) {
      c.col.push_back(j);
      c.val.push_back(acc[j]);
      acc[j] = 0.0;
      seen[j] = 0;
    }
    c.row_ptr[i + 1] = c.col.size();
  }
  return c;
}

}  // namespace granet
