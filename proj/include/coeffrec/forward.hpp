#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "coeffrec/fem.hpp"
#include "coeffrec/field.hpp"
#include "coeffrec/linalg.hpp"
#include "coeffrec/mesh.hpp"

namespace coeffrec {

/// -div(q grad u) = f in the domain, u = 0 on the boundary.
struct EllipticProblem {
  const Mesh* mesh = nullptr;
  CoefficientField q;
  CoefficientField f;
  AssemblyMode mode = AssemblyMode::exact();
};

/// u_t - div(q grad u) = f, u = 0 on the boundary, u(0) = u0, on (0, T)
/// with N backward Euler steps.
struct ParabolicProblem {
  const Mesh* mesh = nullptr;
  CoefficientField q;
  SpaceTimeField f;
  CoefficientField u0;
  double T = 1.0;
  int N = 1;
  AssemblyMode mode = AssemblyMode::exact();

  double tau() const { return T / N; }
};

FeFunction solve_elliptic(const EllipticProblem& p);

/// U^0 = zero-trace L2 projection of u0, then
/// (M + tau A) U^n = M U^(n-1) + tau b(t_n) for n = 1..N.
std::vector<FeFunction> solve_parabolic(const ParabolicProblem& p);

/// Dirichlet-eliminated factorization of a stiffness-type matrix. Right-hand
/// sides get their boundary entries zeroed, so solutions vanish there.
class DirichletSolver {
 public:
  DirichletSolver(SparseMatrix a, const Mesh& mesh);
  std::vector<double> solve(std::vector<double> rhs) const;
  const SparseMatrix& matrix() const { return a_; }

 private:
  SparseMatrix a_;
  BandedCholesky chol_;
  const Mesh* mesh_;
};

/// Backward Euler marching for a coefficient given by its element integrals.
/// loads[n - 1] is b(t_n), n = 1..N. Returns U^0..U^N.
std::vector<std::vector<double>> march_backward_euler(const P1Pattern& pattern, const SparseMatrix& mass,
                                                      const SparseMatrix& stiffness, double tau,
                                                      std::vector<double> u0,
                                                      std::span<const std::vector<double>> loads);

/// How time-series data are stored: one snapshot per grid time t_0..t_N, or
/// one snapshot per step (already representing step n).
enum class SnapshotLayout { endpoints, per_step };

/// Time average of the data over (t_(n-1), t_n): trapezoid of the two
/// endpoint snapshots, or the step's own snapshot for per-step storage.
std::vector<double> observation_average(std::span<const std::vector<double>> snapshots, int n,
                                        SnapshotLayout layout = SnapshotLayout::endpoints);

/// step,node,value rows for a state sequence.
void write_state_series_csv(std::span<const FeFunction> states, const std::filesystem::path& file);

}  // namespace coeffrec
