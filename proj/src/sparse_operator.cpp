#include "cpm/sparse_operator.hpp"

#include <iomanip>
#include <ostream>

#include "cpm/errors.hpp"

namespace cpm {

void SparseOperator::push_row(std::span<const int> c, std::span<const double> w) {
  cols.insert(cols.end(), c.begin(), c.end());
  vals.insert(vals.end(), w.begin(), w.end());
  row_ptr.push_back(static_cast<int>(cols.size()));
  ++n_rows;
}

void SparseOperator::multiply(std::span<const double> x, std::span<double> y) const {
  if (static_cast<int>(x.size()) < n_cols || static_cast<int>(y.size()) < n_rows) {
    fail(ErrorCode::DimensionMismatch, "sparse multiply: vector sizes do not match operator");
  }
  const int* rp = row_ptr.data();
  const int* cc = cols.data();
  const double* vv = vals.data();
  const double* xx = x.data();
  double* yy = y.data();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_rows; ++i) {
    double s = 0.0;
    for (int k = rp[i]; k < rp[i + 1]; ++k) s += vv[k] * xx[cc[k]];
    yy[i] = s;
  }
}

std::vector<double> SparseOperator::operator*(std::span<const double> x) const {
  std::vector<double> y(n_rows);
  multiply(x, y);
  return y;
}

double SparseOperator::coeff(int i, int j) const {
  for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
    if (cols[k] == j) return vals[k];
  }
  return 0.0;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> SparseOperator::to_eigen() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(nnz());
  for (int i = 0; i < n_rows; ++i) {
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) t.emplace_back(i, cols[k], vals[k]);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> m(n_rows, n_cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SparseOperator SparseOperator::identity(int n) {
  SparseOperator I;
  I.n_cols = n;
  for (int i = 0; i < n; ++i) {
    const int c = i;
    const double w = 1.0;
    I.push_row({&c, 1}, {&w, 1});
  }
  return I;
}

void SparseOperator::write_coo(std::ostream& out) const {
  out << std::setprecision(17);
  for (int i = 0; i < n_rows; ++i) {
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out << i << ' ' << cols[k] << ' ' << vals[k] << '\n';
  }
}

void split_diagonal(const SparseOperator& L, std::vector<double>& diag, SparseOperator& off) {
  diag.assign(L.n_rows, 0.0);
  off = SparseOperator{};
  off.n_cols = L.n_cols;
  off.row_ptr.reserve(L.n_rows + 1);
  off.cols.reserve(L.nnz());
  off.vals.reserve(L.nnz());
  for (int i = 0; i < L.n_rows; ++i) {
    for (int k = L.row_ptr[i]; k < L.row_ptr[i + 1]; ++k) {
      if (L.cols[k] == i) {
        diag[i] += L.vals[k];
      } else {
        off.cols.push_back(L.cols[k]);
        off.vals.push_back(L.vals[k]);
      }
    }
    off.row_ptr.push_back(static_cast<int>(off.cols.size()));
    ++off.n_rows;
  }
}

}  // namespace cpm
