#include <cmath>
#include <random>

#include "coeffrec/errors.hpp"
#include "coeffrec/linalg.hpp"
#include "doctest.h"

using namespace coeffrec;

namespace {

// random SPD matrix: tridiagonal-plus-random-band, diagonally dominant
SparseMatrix random_spd(std::size_t n, std::uint64_t seed, std::vector<std::vector<double>>& dense) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  dense.assign(n, std::vector<double>(n, 0.0));
  TripletBuffer buf;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < std::min(n, i + 4); ++j) {
      const double v = u(rng);
      dense[i][j] += v;
      dense[j][i] += v;
      buf.add(int(i), int(j), v);
      buf.add(int(j), int(i), v);
    }
  for (std::size_t i = 0; i < n; ++i) {
    dense[i][i] += 8.0;
    buf.add(int(i), int(i), 5.0);
    buf.add(int(i), int(i), 3.0);  // duplicates must sum
  }
  return compress(buf, n);
}

}  // namespace

TEST_CASE("compression sums duplicates and sorts columns") {
  TripletBuffer b;
  b.add(1, 2, 1.0);
  b.add(0, 0, 2.0);
  b.add(1, 0, -1.0);
  b.add(1, 2, 0.5);
  const auto a = compress(b, 3);
  CHECK(a.nnz() == 3);
  CHECK(a.at(1, 2) == 1.5);
  CHECK(a.at(2, 2) == 0.0);
  CHECK(a.find(2, 2) == -1);
  CHECK(a.cols()[a.row_offsets()[1]] == 0);
  TripletBuffer bad;
  bad.add(3, 0, 1.0);
  CHECK_THROWS_AS(compress(bad, 3), std::invalid_argument);
}

TEST_CASE("sparse matvec agrees with dense on a random 20x20") {
  std::vector<std::vector<double>> d;
  const auto a = random_spd(20, 7, d);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> x(20);
  for (auto& v : x) v = g(rng);
  const auto y = a * x;
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 20; ++j) s += d[i][j] * x[j];
    CHECK(y[i] == doctest::Approx(s).epsilon(1e-14));
  }
  CHECK(a.asymmetry() == 0.0);
  CHECK(a.bandwidth() == 3);
  CHECK(a.to_dense() == d);
}

TEST_CASE("PCG meets its residual contract") {
  std::vector<std::vector<double>> d;
  const auto a = random_spd(200, 11, d);
  std::vector<double> b(200);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::sin(double(i));
  CgReport rep;
  const auto x = solve_spd(a, b, 1e-10, &rep);
  const auto r = a * x;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    num += (r[i] - b[i]) * (r[i] - b[i]);
    den += b[i] * b[i];
  }
  CHECK(std::sqrt(num / den) <= 1e-10);
  CHECK(rep.relative_residual <= 1e-10);
  CHECK(rep.iterations > 0);
  CHECK(rep.iterations <= 2000);
  // zero rhs returns zero
  const auto z = solve_spd(a, std::vector<double>(200, 0.0));
  CHECK(norm2(z) == 0.0);
}

TEST_CASE("PCG reports failure on an indefinite matrix") {
  TripletBuffer b;
  b.add(0, 0, 1.0);
  b.add(1, 1, -1.0);
  b.add(0, 1, 2.0);
  b.add(1, 0, 2.0);
  const auto a = compress(b, 2);
  CHECK_THROWS_AS(solve_spd(a, std::vector<double>{1.0, 1.0}), SolverFailure);
}

TEST_CASE("banded Cholesky matches PCG") {
  std::vector<std::vector<double>> d;
  const auto a = random_spd(60, 5, d);
  std::vector<double> b(60);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 1.0 + 0.1 * double(i);
  const BandedCholesky chol(a);
  const auto x1 = chol.solve(b);
  const auto x2 = solve_spd(a, b, 1e-13);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(x1[i] == doctest::Approx(x2[i]).epsilon(1e-9));
}

TEST_CASE("axpy on a shared pattern") {
  TripletBuffer b;
  b.add(0, 0, 1.0);
  b.add(0, 1, 2.0);
  b.add(1, 1, 3.0);
  const auto a = compress(b, 2);
  const auto c = a.axpy_same_pattern(2.0, a);
  CHECK(c.at(0, 1) == 6.0);
  CHECK(dot(std::vector<double>{1, 2}, std::vector<double>{3, 4}) == 11.0);
}
