#include "coeffrec/fem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace coeffrec {

QuadratureRule make_rule(const Mesh& mesh, AssemblyMode mode) {
  return mode.is_exact() ? reference_rule(mesh) : vertex_rule(mesh, mode.level);
}

FeFunction::FeFunction(const Mesh& mesh, std::vector<double> values) : mesh_(&mesh), values_(std::move(values)) {
  if (values_.size() != mesh.num_nodes()) throw std::invalid_argument("FeFunction: value count != node count");
}

double FeFunction::evaluate(const Point& x) const {
  const auto loc = mesh_->locate(x);
  const auto& e = mesh_->element(loc.element);
  double s = 0.0;
  for (int a = 0; a <= mesh_->dim(); ++a) s += loc.bary[a] * values_[e[a]];
  return s;
}

Point FeFunction::element_gradient(std::size_t k) const {
  const auto& e = mesh_->element(k);
  Point g{0.0, 0.0};
  if (mesh_->dim() == 1) {
    g[0] = (values_[e[1]] - values_[e[0]]) / (mesh_->node(e[1])[0] - mesh_->node(e[0])[0]);
    return g;
  }
  const Point& a = mesh_->node(e[0]);
  const Point& b = mesh_->node(e[1]);
  const Point& c = mesh_->node(e[2]);
  const double m00 = b[0] - a[0], m01 = c[0] - a[0];
  const double m10 = b[1] - a[1], m11 = c[1] - a[1];
  const double det = m00 * m11 - m01 * m10;
  const double d1 = values_[e[1]] - values_[e[0]], d2 = values_[e[2]] - values_[e[0]];
  // solve [b-a, c-a]^T g = (d1, d2)
  g[0] = (m11 * d1 - m10 * d2) / det;
  g[1] = (-m01 * d1 + m00 * d2) / det;
  return g;
}

Point FeFunction::gradient(const Point& x) const { return element_gradient(mesh_->locate(x).element); }

CoefficientField FeFunction::as_field() const {
  FeFunction copy = *this;
  return {[copy](const Point& x) { return copy.evaluate(x); }, [copy](const Point& x) { return copy.gradient(x); }};
}

std::vector<std::array<Point, 3>> barycentric_gradients(const Mesh& mesh) {
  std::vector<std::array<Point, 3>> out(mesh.num_elements());
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const auto& e = mesh.element(k);
    if (mesh.dim() == 1) {
      const double len = mesh.node(e[1])[0] - mesh.node(e[0])[0];
      out[k] = {Point{-1.0 / len, 0.0}, Point{1.0 / len, 0.0}, Point{0.0, 0.0}};
      continue;
    }
    const Point& a = mesh.node(e[0]);
    const Point& b = mesh.node(e[1]);
    const Point& c = mesh.node(e[2]);
    const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    // grad lambda_i = rot90(opposite edge) / det
    out[k][0] = {(b[1] - c[1]) / det, (c[0] - b[0]) / det};
    out[k][1] = {(c[1] - a[1]) / det, (a[0] - c[0]) / det};
    out[k][2] = {(a[1] - b[1]) / det, (b[0] - a[0]) / det};
  }
  return out;
}

P1Pattern::P1Pattern(const Mesh& mesh) : mesh_(&mesh), grads_(barycentric_gradients(mesh)) {
  const std::size_t n = mesh.num_nodes();
  const int nv = mesh.vertices_per_element();
  std::vector<std::set<int>> adj(n);
  for (const auto& e : mesh.elements())
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) adj[e[a]].insert(e[b]);
  offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    offsets_[i + 1] = offsets_[i] + adj[i].size();
    cols_.insert(cols_.end(), adj[i].begin(), adj[i].end());
  }
  slots_.assign(mesh.num_elements() * 9, 0);
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const auto& e = mesh.element(k);
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) {
        const auto first = cols_.begin() + long(offsets_[e[a]]);
        const auto last = cols_.begin() + long(offsets_[e[a] + 1]);
        slots_[k * 9 + a * 3 + b] = std::size_t(std::lower_bound(first, last, e[b]) - cols_.begin());
      }
  }
}

SparseMatrix P1Pattern::zero_matrix() const {
  return SparseMatrix(mesh_->num_nodes(), offsets_, cols_, std::vector<double>(cols_.size(), 0.0));
}

double P1Pattern::gradient_product(std::size_t k, int a, int b) const {
  const auto& g = grads_[k];
  return g[a][0] * g[b][0] + g[a][1] * g[b][1];
}

SparseMatrix P1Pattern::stiffness(std::span<const double> element_integrals) const {
  SparseMatrix a = zero_matrix();
  auto& v = a.values();
  const int nv = mesh_->vertices_per_element();
  for (std::size_t k = 0; k < mesh_->num_elements(); ++k)
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) v[slot(k, i, j)] += element_integrals[k] * gradient_product(k, i, j);
  return a;
}

SparseMatrix P1Pattern::mass() const {
  SparseMatrix m = zero_matrix();
  auto& v = m.values();
  const int nv = mesh_->vertices_per_element();
  const double denom = double(nv * (nv + 1));
  for (std::size_t k = 0; k < mesh_->num_elements(); ++k) {
    const double area = mesh_->element_measure(k);
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) v[slot(k, i, j)] += area * (i == j ? 2.0 : 1.0) / denom;
  }
  return m;
}

SparseMatrix assemble_mass(const Mesh& mesh) { return P1Pattern(mesh).mass(); }

std::vector<double> element_integrals(const QuadratureRule& rule, std::span<const double> point_values) {
  std::vector<double> s(rule.num_elements(), 0.0);
  for (std::size_t k = 0; k < s.size(); ++k)
    for (const auto& e : rule.element(k)) s[k] += e.weight * point_values[e.point];
  return s;
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const CoefficientField& q, AssemblyMode mode) {
  const QuadratureRule rule = make_rule(mesh, mode);
  return P1Pattern(mesh).stiffness(element_integrals(rule, rule.sample(q.value)));
}

std::vector<double> assemble_load(const Mesh& mesh, const QuadratureRule& reference,
                                  const std::function<double(const Point&)>& f) {
  std::vector<double> b(mesh.num_nodes(), 0.0);
  const int nv = mesh.vertices_per_element();
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const auto& e = mesh.element(k);
    for (const auto& q : reference.element(k)) {
      const double fv = q.weight * f(reference.points[q.point]);
      for (int a = 0; a < nv; ++a) b[e[a]] += fv * q.bary[a];
    }
  }
  return b;
}

std::vector<double> assemble_load(const Mesh& mesh, const CoefficientField& f) {
  return assemble_load(mesh, reference_rule(mesh), f.value);
}

FeFunction l2_project(const Mesh& mesh, const CoefficientField& v) {
  const SparseMatrix m = assemble_mass(mesh);
  return FeFunction(mesh, solve_spd(m, assemble_load(mesh, v), 1e-12));
}

FeFunction l2_project_zero_trace(const Mesh& mesh, const CoefficientField& v) {
  auto sys = apply_dirichlet(assemble_mass(mesh), assemble_load(mesh, v), mesh);
  return FeFunction(mesh, solve_spd(sys.matrix, sys.rhs, 1e-12));
}

void apply_dirichlet_in_place(SparseMatrix& a, const Mesh& mesh) {
  auto& v = a.values();
  const auto& off = a.row_offsets();
  const auto& cols = a.cols();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool row_bc = mesh.is_boundary(i);
    for (std::size_t p = off[i]; p < off[i + 1]; ++p) {
      const std::size_t j = std::size_t(cols[p]);
      if (row_bc || mesh.is_boundary(j)) v[p] = (i == j) ? 1.0 : 0.0;
    }
  }
}

void zero_boundary(std::span<double> v, const Mesh& mesh) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mesh.is_boundary(i)) v[i] = 0.0;
}

DirichletSystem apply_dirichlet(SparseMatrix a, std::vector<double> b, const Mesh& mesh) {
  apply_dirichlet_in_place(a, mesh);
  zero_boundary(b, mesh);
  return {std::move(a), std::move(b)};
}

FeFunction transfer(const FeFunction& fine, const Mesh& coarse) {
  const Mesh& fm = fine.mesh();
  if (fm.dim() != coarse.dim()) throw std::invalid_argument("transfer: dimension mismatch");
  std::vector<double> out(coarse.num_nodes());
  for (std::size_t i = 0; i < coarse.num_nodes(); ++i) {
    const long j = fm.find_node(coarse.node(i));
    if (j < 0) throw std::invalid_argument("transfer: meshes are not nested");
    out[i] = fine[std::size_t(j)];
  }
  return FeFunction(coarse, std::move(out));
}

void write_fe_csv(const FeFunction& u, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_fe_csv: cannot open " + file.string());
  out.precision(17);
  const Mesh& mesh = u.mesh();
  out << (mesh.dim() == 1 ? "node,x1,value\n" : "node,x1,x2,value\n");
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    out << i << ',' << mesh.node(i)[0];
    if (mesh.dim() == 2) out << ',' << mesh.node(i)[1];
    out << ',' << u[i] << '\n';
  }
}

double mass_norm(const SparseMatrix& m, std::span<const double> v) {
  const auto mv = m * v;
  return std::sqrt(std::max(0.0, dot(v, mv)));
}

}  // namespace coeffrec
