#include "coeffrec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "coeffrec/errors.hpp"

namespace coeffrec {

SparseMatrix::SparseMatrix(std::size_t n, std::vector<std::size_t> row_offsets, std::vector<int> cols,
                           std::vector<double> values)
    : n_(n), row_offsets_(std::move(row_offsets)), cols_(std::move(cols)), values_(std::move(values)) {
  if (row_offsets_.size() != n_ + 1 || cols_.size() != values_.size() || row_offsets_.back() != cols_.size())
    throw std::invalid_argument("SparseMatrix: inconsistent CSR arrays");
}

long SparseMatrix::find(std::size_t i, std::size_t j) const {
  const auto first = cols_.begin() + long(row_offsets_[i]);
  const auto last = cols_.begin() + long(row_offsets_[i + 1]);
  const auto it = std::lower_bound(first, last, int(j));
  if (it == last || *it != int(j)) return -1;
  return long(it - cols_.begin());
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  const long p = find(i, j);
  return p < 0 ? 0.0 : values_[std::size_t(p)];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) s += values_[p] * x[cols_[p]];
    y[i] = s;
  }
}

std::vector<double> SparseMatrix::operator*(std::span<const double> x) const {
  std::vector<double> y(n_);
  multiply(x, y);
  return y;
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) d[i] = at(i, i);
  return d;
}

std::size_t SparseMatrix::bandwidth() const {
  std::size_t bw = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
      bw = std::max(bw, std::size_t(std::abs(long(cols_[p]) - long(i))));
  return bw;
}

double SparseMatrix::asymmetry() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
      worst = std::max(worst, std::abs(values_[p] - at(std::size_t(cols_[p]), i)));
  return worst;
}

std::vector<std::vector<double>> SparseMatrix::to_dense() const {
  std::vector<std::vector<double>> d(n_, std::vector<double>(n_, 0.0));
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) d[i][cols_[p]] = values_[p];
  return d;
}

SparseMatrix SparseMatrix::axpy_same_pattern(double alpha, const SparseMatrix& other) const {
  if (other.n_ != n_ || other.cols_ != cols_)
    throw std::invalid_argument("axpy_same_pattern: sparsity patterns differ");
  SparseMatrix out = *this;
  for (std::size_t p = 0; p < values_.size(); ++p) out.values_[p] += alpha * other.values_[p];
  return out;
}

SparseMatrix compress(const TripletBuffer& buf, std::size_t n) {
  std::vector<Triplet> t = buf.entries();
  for (const auto& e : t) {
    if (e.row < 0 || e.col < 0 || std::size_t(e.row) >= n || std::size_t(e.col) >= n)
      throw std::invalid_argument("compress: index (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                                  ") out of range for n=" + std::to_string(n));
  }
  // stable so that duplicate sums follow insertion order
  std::stable_sort(t.begin(), t.end(),
                   [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  std::vector<std::size_t> offsets(n + 1, 0);
  std::vector<int> cols;
  std::vector<double> vals;
  cols.reserve(t.size());
  vals.reserve(t.size());
  for (std::size_t p = 0; p < t.size();) {
    const int r = t[p].row, c = t[p].col;
    double s = 0.0;
    for (; p < t.size() && t[p].row == r && t[p].col == c; ++p) s += t[p].value;
    cols.push_back(c);
    vals.push_back(s);
    ++offsets[std::size_t(r) + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return SparseMatrix(n, std::move(offsets), std::move(cols), std::move(vals));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> solve_spd(const SparseMatrix& a, std::span<const double> b, double tol, CgReport* report) {
  const std::size_t n = a.size();
  if (b.size() != n) throw std::invalid_argument("solve_spd: size mismatch");
  std::vector<double> x(n, 0.0);
  const double bnorm = norm2(b);
  if (report) *report = {0, 0.0};
  if (bnorm == 0.0) return x;

  std::vector<double> inv_diag = a.diagonal();
  for (auto& d : inv_diag) {
    if (!(d > 0.0)) throw SolverFailure("solve_spd: non-positive diagonal entry");
    d = 1.0 / d;
  }
  std::vector<double> r(b.begin(), b.end()), z(n), p(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  const std::size_t cap = std::max<std::size_t>(10 * n, 10);
  double rel = 1.0;
  for (std::size_t it = 1; it <= cap; ++it) {
    a.multiply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw SolverFailure("solve_spd: matrix not positive definite", rel);
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    rel = norm2(r) / bnorm;
    if (rel <= tol) {
      // confirm against the true residual; recurrence drift can understate it
      a.multiply(x, ap);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
      rel = norm2(r) / bnorm;
      if (rel <= tol) {
        if (report) *report = {it, rel};
        return x;
      }
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverFailure("solve_spd: no convergence within " + std::to_string(cap) +
                          " iterations, relative residual " + std::to_string(rel),
                      rel);
}

BandedCholesky::BandedCholesky(const SparseMatrix& a) : n_(a.size()), bw_(a.bandwidth()) {
  const std::size_t w = bw_ + 1;
  l_.assign(n_ * w, 0.0);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return l_[i * w + (j + bw_ - i)]; };
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t p = a.row_offsets()[i]; p < a.row_offsets()[i + 1]; ++p) {
      const std::size_t j = std::size_t(a.cols()[p]);
      if (j <= i) at(i, j) = a.values()[p];
    }
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t lo = i > bw_ ? i - bw_ : 0;
    for (std::size_t j = lo; j <= i; ++j) {
      const std::size_t klo = std::max(lo, j > bw_ ? j - bw_ : 0);
      double s = at(i, j);
      for (std::size_t k = klo; k < j; ++k) s -= at(i, k) * at(j, k);
      if (j == i) {
        if (!(s > 0.0)) throw SolverFailure("BandedCholesky: matrix not positive definite at row " + std::to_string(i));
        at(i, i) = std::sqrt(s);
      } else {
        at(i, j) = s / at(j, j);
      }
    }
  }
}

void BandedCholesky::solve_in_place(std::span<double> x) const {
  if (x.size() != n_) throw std::invalid_argument("BandedCholesky: size mismatch");
  const std::size_t w = bw_ + 1;
  auto at = [&](std::size_t i, std::size_t j) { return l_[i * w + (j + bw_ - i)]; };
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t lo = i > bw_ ? i - bw_ : 0;
    double s = x[i];
    for (std::size_t k = lo; k < i; ++k) s -= at(i, k) * x[k];
    x[i] = s / at(i, i);
  }
  for (std::size_t ii = n_; ii-- > 0;) {
    const std::size_t hi = std::min(n_ - 1, ii + bw_);
    double s = x[ii];
    for (std::size_t k = ii + 1; k <= hi; ++k) s -= at(k, ii) * x[k];
    x[ii] = s / at(ii, ii);
  }
}

std::vector<double> BandedCholesky::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_in_place(x);
  return x;
}

}  // namespace coeffrec
