#include "coeffrec/quad.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace coeffrec {

namespace {

std::array<double, 3> barycentric(const Mesh& mesh, std::size_t k, const Point& x) {
  const auto& e = mesh.element(k);
  const Point& a = mesh.node(e[0]);
  const Point& b = mesh.node(e[1]);
  if (mesh.dim() == 1) {
    const double s = (x[0] - a[0]) / (b[0] - a[0]);
    return {1.0 - s, s, 0.0};
  }
  const Point& c = mesh.node(e[2]);
  const double m00 = b[0] - a[0], m01 = c[0] - a[0];
  const double m10 = b[1] - a[1], m11 = c[1] - a[1];
  const double det = m00 * m11 - m01 * m10;
  const double rx = x[0] - a[0], ry = x[1] - a[1];
  const double l1 = (m11 * rx - m01 * ry) / det;
  const double l2 = (-m10 * rx + m00 * ry) / det;
  return {1.0 - l1 - l2, l1, l2};
}

Point from_bary(const Mesh& mesh, std::size_t k, const std::array<double, 3>& l) {
  Point x{0.0, 0.0};
  for (int a = 0; a <= mesh.dim(); ++a) {
    x[0] += l[a] * mesh.node(mesh.element(k)[a])[0];
    x[1] += l[a] * mesh.node(mesh.element(k)[a])[1];
  }
  return x;
}

}  // namespace

double QuadratureRule::integrate(std::span<const double> values) const {
  double total = 0.0;
  for (std::size_t k = 0; k < num_elements(); ++k) {
    double local = 0.0;
    for (const auto& e : element(k)) local += e.weight * values[e.point];
    total += local;
  }
  return total;
}

std::vector<double> QuadratureRule::sample(const std::function<double(const Point&)>& v) const {
  std::vector<double> out(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) out[p] = v(points[p]);
  return out;
}

QuadratureRule vertex_rule(const Mesh& mesh, int level) {
  if (level < 0) throw std::invalid_argument("vertex_rule: level must be >= 0");
  if (level > 20) throw std::invalid_argument("vertex_rule: level too large");
  QuadratureRule rule;
  rule.level = level;
  rule.dim = mesh.dim();
  // every sub-simplex vertex lies on the lattice of spacing h_grid / 2^level
  const double scale = double(mesh.cells_per_side()) * std::ldexp(1.0, level);
  std::map<std::pair<long, long>, int> index;
  auto key_of = [&](const Point& x) {
    return std::make_pair(std::lround(x[0] * scale), mesh.dim() == 2 ? std::lround(x[1] * scale) : 0L);
  };
  const int nv = mesh.dim() + 1;
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const SubSimplexSet sub = subdivide_element(mesh, k, level);
    const double w = sub.child_measure / nv;
    std::map<std::pair<long, long>, double> local;  // merged weights in this element
    std::map<std::pair<long, long>, Point> coords;
    for (const auto& child : sub.children) {
      for (int j = 0; j < nv; ++j) {
        const auto key = key_of(child[j]);
        local[key] += w;
        coords.emplace(key, child[j]);
      }
    }
    for (const auto& [key, weight] : local) {
      auto [it, inserted] = index.emplace(key, int(rule.points.size()));
      if (inserted) rule.points.push_back(coords[key]);
      rule.entries.push_back({it->second, weight, barycentric(mesh, k, rule.points[it->second])});
    }
    rule.offsets.push_back(rule.entries.size());
  }
  return rule;
}

QuadratureRule reference_rule(const Mesh& mesh) {
  QuadratureRule rule;
  rule.level = -1;
  rule.dim = mesh.dim();
  std::vector<std::pair<std::array<double, 3>, double>> ref;  // barycentric point, weight fraction
  if (mesh.dim() == 1) {
    // 3-point Gauss-Legendre, exact for degree 5
    const double g = std::sqrt(0.6);
    ref = {{{0.5 * (1 + g), 0.5 * (1 - g), 0.0}, 5.0 / 18.0},
           {{0.5, 0.5, 0.0}, 8.0 / 18.0},
           {{0.5 * (1 - g), 0.5 * (1 + g), 0.0}, 5.0 / 18.0}};
  } else {
    // 6-point symmetric rule, exact for degree 4
    const double a = 0.445948490915965, wa = 0.223381589678011;
    const double b = 0.091576213509771, wb = 0.109951743655322;
    ref = {{{a, a, 1 - 2 * a}, wa}, {{a, 1 - 2 * a, a}, wa}, {{1 - 2 * a, a, a}, wa},
           {{b, b, 1 - 2 * b}, wb}, {{b, 1 - 2 * b, b}, wb}, {{1 - 2 * b, b, b}, wb}};
  }
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const double area = mesh.element_measure(k);
    for (const auto& [l, w] : ref) {
      rule.entries.push_back({int(rule.points.size()), w * area, l});
      rule.points.push_back(from_bary(mesh, k, l));
    }
    rule.offsets.push_back(rule.entries.size());
  }
  return rule;
}

double integrate(const Mesh& mesh, const CoefficientField& v, int level) {
  const QuadratureRule rule = vertex_rule(mesh, level);
  return rule.integrate(rule.sample(v.value));
}

double broken_inner(const Mesh& mesh, const CoefficientField& w, const CoefficientField& v, int level) {
  const QuadratureRule rule = vertex_rule(mesh, level);
  return rule.integrate(rule.sample([&](const Point& x) { return w(x) * v(x); }));
}

double penalty_quadrature(const Mesh& mesh, const std::function<Point(const Point&)>& grad_q, int level) {
  const QuadratureRule rule = vertex_rule(mesh, level);
  const int d = mesh.dim();
  return rule.integrate(rule.sample([&](const Point& x) {
    const Point g = grad_q(x);
    return d == 1 ? g[0] * g[0] : g[0] * g[0] + g[1] * g[1];
  }));
}

}  // namespace coeffrec
