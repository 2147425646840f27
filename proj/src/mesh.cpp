#include "coeffrec/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace coeffrec {

namespace {

double dist(const Point& a, const Point& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

Point midpoint(const Point& a, const Point& b) {
  return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
}

}  // namespace

double simplex_measure(int dim, const std::array<Point, 3>& v) {
  if (dim == 1) return std::abs(v[1][0] - v[0][0]);
  const double ax = v[1][0] - v[0][0], ay = v[1][1] - v[0][1];
  const double bx = v[2][0] - v[0][0], by = v[2][1] - v[0][1];
  return 0.5 * std::abs(ax * by - ay * bx);
}

double simplex_diameter(int dim, const std::array<Point, 3>& v) {
  double d = dist(v[0], v[1]);
  if (dim == 2) d = std::max({d, dist(v[1], v[2]), dist(v[0], v[2])});
  return d;
}

Mesh unit_interval_mesh(int m) {
  if (m < 1) throw std::invalid_argument("unit_interval_mesh: m must be >= 1");
  Mesh mesh;
  mesh.dim_ = 1;
  mesh.m_ = m;
  mesh.nodes_.reserve(m + 1);
  for (int i = 0; i <= m; ++i) mesh.nodes_.push_back({i / double(m), 0.0});
  for (int i = 0; i < m; ++i) mesh.elements_.push_back({i, i + 1, -1});
  mesh.finalize();
  return mesh;
}

Mesh unit_square_mesh(int m) {
  if (m < 1) throw std::invalid_argument("unit_square_mesh: m must be >= 1");
  Mesh mesh;
  mesh.dim_ = 2;
  mesh.m_ = m;
  const int n = m + 1;
  mesh.nodes_.reserve(std::size_t(n) * n);
  for (int j = 0; j <= m; ++j)
    for (int i = 0; i <= m; ++i) mesh.nodes_.push_back({i / double(m), j / double(m)});
  mesh.elements_.reserve(2 * std::size_t(m) * m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const int ll = j * n + i, lr = ll + 1, ul = ll + n, ur = ul + 1;
      // lower-right then upper-left triangle of the cell, split along ll-ur
      mesh.elements_.push_back({ll, lr, ur});
      mesh.elements_.push_back({ll, ur, ul});
    }
  }
  mesh.finalize();
  return mesh;
}

void Mesh::finalize() {
  boundary_.assign(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (int c = 0; c < dim_; ++c) {
      const double x = nodes_[i][c];
      if (std::abs(x) <= 1e-14 || std::abs(x - 1.0) <= 1e-14) boundary_[i] = 1;
    }
  }
  measure_.resize(elements_.size());
  h_ = 0.0;
  for (std::size_t k = 0; k < elements_.size(); ++k) {
    std::array<Point, 3> v{};
    for (int a = 0; a <= dim_; ++a) v[a] = nodes_[elements_[k][a]];
    measure_[k] = simplex_measure(dim_, v);
    h_ = std::max(h_, simplex_diameter(dim_, v));
  }
}

std::vector<int> Mesh::boundary_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < boundary_.size(); ++i)
    if (boundary_[i]) out.push_back(int(i));
  return out;
}

double Mesh::element_diameter(std::size_t k) const {
  std::array<Point, 3> v{};
  for (int a = 0; a <= dim_; ++a) v[a] = nodes_[elements_[k][a]];
  return simplex_diameter(dim_, v);
}

Point Mesh::barycenter(std::size_t k) const {
  Point c{0.0, 0.0};
  for (int a = 0; a <= dim_; ++a) {
    c[0] += nodes_[elements_[k][a]][0];
    c[1] += nodes_[elements_[k][a]][1];
  }
  c[0] /= (dim_ + 1);
  c[1] /= (dim_ + 1);
  return c;
}

Mesh::Location Mesh::locate(const Point& x) const {
  auto cell = [this](double t) {
    return std::clamp(int(std::floor(t * m_)), 0, m_ - 1);
  };
  if (dim_ == 1) {
    const int i = cell(x[0]);
    const double a = nodes_[i][0], b = nodes_[i + 1][0];
    const double s = (x[0] - a) / (b - a);
    return {std::size_t(i), {1.0 - s, s, 0.0}};
  }
  const int i = cell(x[0]), j = cell(x[1]);
  const double s = x[0] * m_ - i, t = x[1] * m_ - j;
  const std::size_t base = 2 * (std::size_t(j) * m_ + i);
  // lower-right triangle (ll, lr, ur) when s >= t
  if (s >= t) return {base, {1.0 - s, s - t, t}};
  return {base + 1, {1.0 - t, s, t - s}};
}

long Mesh::find_node(const Point& x) const {
  auto grid = [this](double t, int& idx) {
    const double g = t * m_;
    idx = int(std::lround(g));
    return idx >= 0 && idx <= m_ && std::abs(t - idx / double(m_)) <= 1e-12;
  };
  int i = 0, j = 0;
  if (!grid(x[0], i)) return -1;
  if (dim_ == 1) return i;
  if (!grid(x[1], j)) return -1;
  return long(j) * (m_ + 1) + i;
}

Mesh refine_uniform(const Mesh& mesh) {
  // Midpoint refinement of the structured mesh reproduces the structured
  // mesh of twice the resolution with the same diagonal orientation.
  return mesh.dim() == 1 ? unit_interval_mesh(2 * mesh.cells_per_side())
                         : unit_square_mesh(2 * mesh.cells_per_side());
}

SubSimplexSet subdivide_element(const Mesh& mesh, std::size_t element, int level) {
  if (element >= mesh.num_elements())
    throw std::invalid_argument("subdivide_element: element index out of range");
  if (level < 0) throw std::invalid_argument("subdivide_element: level must be >= 0");
  const int d = mesh.dim();
  std::array<Point, 3> root{};
  for (int a = 0; a <= d; ++a) root[a] = mesh.node(mesh.element(element)[a]);

  std::vector<std::array<Point, 3>> current{root};
  for (int l = 0; l < level; ++l) {
    std::vector<std::array<Point, 3>> next;
    next.reserve(current.size() * (d == 1 ? 2 : 4));
    for (const auto& s : current) {
      if (d == 1) {
        const Point m = midpoint(s[0], s[1]);
        next.push_back({s[0], m, Point{}});
        next.push_back({m, s[1], Point{}});
      } else {
        const Point m01 = midpoint(s[0], s[1]);
        const Point m12 = midpoint(s[1], s[2]);
        const Point m02 = midpoint(s[0], s[2]);
        next.push_back({s[0], m01, m02});
        next.push_back({m01, s[1], m12});
        next.push_back({m02, m12, s[2]});
        next.push_back({m12, m02, m01});
      }
    }
    current = std::move(next);
  }
  SubSimplexSet out;
  out.parent = element;
  out.level = level;
  out.child_measure = mesh.element_measure(element) / double(current.size());
  out.children = std::move(current);
  return out;
}

void write_mesh_csv(const Mesh& mesh, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream nodes(dir / "nodes.csv");
  std::ofstream elems(dir / "elements.csv");
  if (!nodes || !elems) throw std::runtime_error("write_mesh_csv: cannot open output in " + dir.string());
  nodes.precision(17);
  nodes << (mesh.dim() == 1 ? "index,x1\n" : "index,x1,x2\n");
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    nodes << i << ',' << mesh.node(i)[0];
    if (mesh.dim() == 2) nodes << ',' << mesh.node(i)[1];
    nodes << '\n';
  }
  elems << (mesh.dim() == 1 ? "index,v0,v1\n" : "index,v0,v1,v2\n");
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const auto& e = mesh.element(k);
    elems << k << ',' << e[0] << ',' << e[1];
    if (mesh.dim() == 2) elems << ',' << e[2];
    elems << '\n';
  }
}

}  // namespace coeffrec
