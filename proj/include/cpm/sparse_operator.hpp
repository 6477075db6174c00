#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

namespace cpm {

/// Row-compressed stencil matrix used for both the extension E and the
/// Laplacian L.
struct SparseOperator {
  int n_rows = 0;
  int n_cols = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> cols;
  std::vector<double> vals;

  void push_row(std::span<const int> c, std::span<const double> w);
  int row_begin(int i) const { return row_ptr[i]; }
  int row_end(int i) const { return row_ptr[i + 1]; }
  std::size_t nnz() const { return cols.size(); }

  /// y = A x (y sized n_rows).
  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> operator*(std::span<const double> x) const;
  double row_dot(int i, std::span<const double> x) const {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[cols[k]];
    return s;
  }
  /// Value at (i, j), 0 when not stored.
  double coeff(int i, int j) const;

  Eigen::SparseMatrix<double, Eigen::RowMajor> to_eigen() const;
  static SparseOperator identity(int n);

  /// Coordinate text format: "row col weight" per line.
  void write_coo(std::ostream& out) const;
};

/// Splits L into its diagonal and the off-diagonal remainder.
void split_diagonal(const SparseOperator& L, std::vector<double>& diag, SparseOperator& offdiag);

}  // namespace cpm
