#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "coeffrec/field.hpp"
#include "coeffrec/linalg.hpp"
#include "coeffrec/mesh.hpp"
#include "coeffrec/quad.hpp"

namespace coeffrec {

/// How coefficient integrals inside the stiffness form are evaluated:
/// the degree-4 reference rule ("exact") or the sub-simplex vertex rule.
struct AssemblyMode {
  int level = -1;

  static AssemblyMode exact() { return {-1}; }
  static AssemblyMode quadrature(int n) { return {n}; }
  bool is_exact() const { return level < 0; }
  bool operator==(const AssemblyMode&) const = default;
};

QuadratureRule make_rule(const Mesh& mesh, AssemblyMode mode);

/// A continuous piecewise-linear function given by nodal values. Holds a
/// non-owning pointer to its mesh, which must outlive it.
class FeFunction {
 public:
  FeFunction() = default;
  FeFunction(const Mesh& mesh, std::vector<double> values);
  explicit FeFunction(const Mesh& mesh) : FeFunction(mesh, std::vector<double>(mesh.num_nodes(), 0.0)) {}

  const Mesh& mesh() const { return *mesh_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double evaluate(const Point& x) const;
  Point gradient(const Point& x) const;
  /// Constant gradient on element k.
  Point element_gradient(std::size_t k) const;
  CoefficientField as_field() const;

 private:
  const Mesh* mesh_ = nullptr;
  std::vector<double> values_;
};

/// Gradients of the barycentric (hat) functions on each element.
std::vector<std::array<Point, 3>> barycentric_gradients(const Mesh& mesh);

/// Sparsity pattern of the P1 node graph with, for each element, the CSR
/// positions of its local (a, b) entries. Lets assemblers write values
/// straight into a fixed pattern, so that mass and stiffness matrices share
/// structure and can be combined entrywise.
class P1Pattern {
 public:
  explicit P1Pattern(const Mesh& mesh);

  const Mesh& mesh() const { return *mesh_; }
  SparseMatrix zero_matrix() const;
  /// CSR slot of local entry (a, b) of element k.
  std::size_t slot(std::size_t k, int a, int b) const { return slots_[k * 9 + a * 3 + b]; }
  const std::vector<std::array<Point, 3>>& gradients() const { return grads_; }

  /// A = sum_K s_K (grad phi_a . grad phi_b) with s_K the integral of the
  /// coefficient over K.
  SparseMatrix stiffness(std::span<const double> element_integrals) const;
  SparseMatrix mass() const;
  /// (grad phi_a . grad phi_b) on element k; constant per element.
  double gradient_product(std::size_t k, int a, int b) const;

 private:
  const Mesh* mesh_;
  std::vector<std::size_t> offsets_;
  std::vector<int> cols_;
  std::vector<std::size_t> slots_;
  std::vector<std::array<Point, 3>> grads_;
};

SparseMatrix assemble_mass(const Mesh& mesh);

/// Integrals of a coefficient sampled at the rule's points, per element.
std::vector<double> element_integrals(const QuadratureRule& rule, std::span<const double> point_values);

SparseMatrix assemble_stiffness(const Mesh& mesh, const CoefficientField& q, AssemblyMode mode);

/// b_i = (f, phi_i) with the reference rule.
std::vector<double> assemble_load(const Mesh& mesh, const CoefficientField& f);
std::vector<double> assemble_load(const Mesh& mesh, const QuadratureRule& reference,
                                  const std::function<double(const Point&)>& f);

/// L2 projection onto the full P1 space (no boundary condition).
FeFunction l2_project(const Mesh& mesh, const CoefficientField& v);
/// L2 projection onto the P1 functions vanishing on the boundary.
FeFunction l2_project_zero_trace(const Mesh& mesh, const CoefficientField& v);

struct DirichletSystem {
  SparseMatrix matrix;
  std::vector<double> rhs;
};

/// Symmetric elimination of homogeneous Dirichlet nodes: boundary rows and
/// columns are zeroed (pattern kept), diagonal set to 1 and rhs to 0.
DirichletSystem apply_dirichlet(SparseMatrix a, std::vector<double> b, const Mesh& mesh);
void apply_dirichlet_in_place(SparseMatrix& a, const Mesh& mesh);
void zero_boundary(std::span<double> v, const Mesh& mesh);

/// Nodal restriction from a nested finer mesh.
FeFunction transfer(const FeFunction& fine, const Mesh& coarse);

/// node index, coordinates, value.
void write_fe_csv(const FeFunction& u, const std::filesystem::path& file);

/// L2 norm of a nodal vector with mass matrix m: sqrt(v^T M v).
double mass_norm(const SparseMatrix& m, std::span<const double> v);

}  // namespace coeffrec
