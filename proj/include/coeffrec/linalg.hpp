#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace coeffrec {

struct Triplet {
  int row;
  int col;
  double value;
};

/// Unsorted (row, col, value) contributions; duplicates sum on compression.
class TripletBuffer {
 public:
  void add(int row, int col, double value) { entries_.push_back({row, col, value}); }
  void reserve(std::size_t n) { entries_.reserve(n); }
  const std::vector<Triplet>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Triplet> entries_;
};

/// Square matrix in compressed sparse row storage with strictly increasing
/// column indices in every row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t n, std::vector<std::size_t> row_offsets, std::vector<int> cols,
               std::vector<double> values);

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& cols() const { return cols_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Entry (i, j); zero when not stored.
  double at(std::size_t i, std::size_t j) const;
  /// Position of (i, j) in values(), or -1 when not stored.
  long find(std::size_t i, std::size_t j) const;

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> operator*(std::span<const double> x) const;

  std::vector<double> diagonal() const;
  /// Bandwidth max |i - j| over stored entries.
  std::size_t bandwidth() const;
  /// max |A - A^T| over all entries.
  double asymmetry() const;
  std::vector<std::vector<double>> to_dense() const;

  /// this + alpha * other; both must share the same sparsity pattern.
  SparseMatrix axpy_same_pattern(double alpha, const SparseMatrix& other) const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<int> cols_;
  std::vector<double> values_;
};

SparseMatrix compress(const TripletBuffer& buf, std::size_t n);

/// Result of a preconditioned conjugate gradient solve.
struct CgReport {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned CG for SPD A. Returns x with ||Ax - b|| <= tol ||b||.
/// Throws SolverFailure after 10 n iterations without convergence.
std::vector<double> solve_spd(const SparseMatrix& a, std::span<const double> b, double tol = 1e-10,
                              CgReport* report = nullptr);

/// Cholesky factorization in band storage, for SPD systems reused across
/// many right-hand sides (time marching, forward/adjoint pairs).
class BandedCholesky {
 public:
  BandedCholesky() = default;
  explicit BandedCholesky(const SparseMatrix& a);

  std::size_t size() const { return n_; }
  void solve_in_place(std::span<double> x) const;
  std::vector<double> solve(std::span<const double> b) const;

 private:
  std::size_t n_ = 0;
  std::size_t bw_ = 0;
  // row i holds L(i, i-bw .. i) at l_[i*(bw+1) + (j - i + bw)]
  std::vector<double> l_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace coeffrec
