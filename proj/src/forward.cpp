#include "coeffrec/forward.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "coeffrec/errors.hpp"

namespace coeffrec {

DirichletSolver::DirichletSolver(SparseMatrix a, const Mesh& mesh) : a_(std::move(a)), mesh_(&mesh) {
  apply_dirichlet_in_place(a_, mesh);
  chol_ = BandedCholesky(a_);
}

std::vector<double> DirichletSolver::solve(std::vector<double> rhs) const {
  zero_boundary(rhs, *mesh_);
  chol_.solve_in_place(rhs);
  return rhs;
}

FeFunction solve_elliptic(const EllipticProblem& p) {
  if (!p.mesh) throw std::invalid_argument("solve_elliptic: no mesh");
  const Mesh& mesh = *p.mesh;
  const SparseMatrix a = assemble_stiffness(mesh, p.q, p.mode);
  auto sys = apply_dirichlet(a, assemble_load(mesh, p.f), mesh);
  CgReport report;
  auto u = solve_spd(sys.matrix, sys.rhs, 1e-10, &report);
  zero_boundary(u, mesh);
  return FeFunction(mesh, std::move(u));
}

std::vector<std::vector<double>> march_backward_euler(const P1Pattern& pattern, const SparseMatrix& mass,
                                                      const SparseMatrix& stiffness, double tau,
                                                      std::vector<double> u0,
                                                      std::span<const std::vector<double>> loads) {
  const Mesh& mesh = pattern.mesh();
  DirichletSolver step(mass.axpy_same_pattern(tau, stiffness), mesh);
  std::vector<std::vector<double>> states;
  states.reserve(loads.size() + 1);
  zero_boundary(u0, mesh);
  states.push_back(std::move(u0));
  std::vector<double> rhs(mesh.num_nodes());
  for (std::size_t n = 1; n <= loads.size(); ++n) {
    mass.multiply(states.back(), rhs);
    const auto& b = loads[n - 1];
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += tau * b[i];
    states.push_back(step.solve(rhs));
  }
  return states;
}

std::vector<FeFunction> solve_parabolic(const ParabolicProblem& p) {
  if (!p.mesh) throw std::invalid_argument("solve_parabolic: no mesh");
  if (p.N < 1) throw std::invalid_argument("solve_parabolic: N must be >= 1");
  if (!(p.T > 0.0)) throw std::invalid_argument("solve_parabolic: T must be positive");
  const Mesh& mesh = *p.mesh;
  const P1Pattern pattern(mesh);
  const SparseMatrix mass = pattern.mass();
  const QuadratureRule rule = make_rule(mesh, p.mode);
  const SparseMatrix a = pattern.stiffness(element_integrals(rule, rule.sample(p.q.value)));
  const QuadratureRule ref = reference_rule(mesh);
  const double tau = p.tau();
  std::vector<std::vector<double>> loads;
  loads.reserve(p.N);
  for (int n = 1; n <= p.N; ++n) {
    const double t = n * tau;
    loads.push_back(assemble_load(mesh, ref, [&](const Point& x) { return p.f(x, t); }));
  }
  std::vector<std::vector<double>> states;
  try {
    states = march_backward_euler(pattern, mass, a, tau, l2_project_zero_trace(mesh, p.u0).values(), loads);
  } catch (const SolverFailure& e) {
    throw SolverFailure(std::string("solve_parabolic: ") + e.what(), e.residual(), 1);
  }
  std::vector<FeFunction> out;
  out.reserve(states.size());
  for (auto& s : states) out.emplace_back(mesh, std::move(s));
  return out;
}

std::vector<double> observation_average(std::span<const std::vector<double>> snapshots, int n,
                                        SnapshotLayout layout) {
  if (layout == SnapshotLayout::per_step) {
    if (n < 0 || std::size_t(n) >= snapshots.size())
      throw std::invalid_argument("observation_average: step " + std::to_string(n) + " outside the data window");
    return snapshots[n];
  }
  if (n < 1 || std::size_t(n) >= snapshots.size())
    throw std::invalid_argument("observation_average: step " + std::to_string(n) + " outside the data window");
  const auto& a = snapshots[n - 1];
  const auto& b = snapshots[n];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
  return out;
}

void write_state_series_csv(std::span<const FeFunction> states, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_state_series_csv: cannot open " + file.string());
  out.precision(17);
  out << "step,node,value\n";
  for (std::size_t n = 0; n < states.size(); ++n)
    for (std::size_t i = 0; i < states[n].values().size(); ++i) out << n << ',' << i << ',' << states[n][i] << '\n';
}

}  // namespace coeffrec
