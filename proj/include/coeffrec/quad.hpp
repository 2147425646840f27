#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "coeffrec/field.hpp"
#include "coeffrec/mesh.hpp"

namespace coeffrec {

/// Per-element point/weight lists over a shared table of distinct points.
///
/// The sub-simplex vertex rule at level n places |K_i|/(d+1) at every vertex
/// of each of the 2^(dn) children K_i of K; coincident vertices inside an
/// element are merged and points shared between elements are stored once, so
/// a field is evaluated once per distinct point. The reference rule (level -1)
/// is a degree-4 Gauss rule per element.
struct QuadratureRule {
  struct Entry {
    int point;
    double weight;
    std::array<double, 3> bary;  // barycentric coordinates in the element
  };

  int level = 0;
  int dim = 1;
  std::vector<Point> points;
  std::vector<std::size_t> offsets{0};
  std::vector<Entry> entries;

  std::size_t num_elements() const { return offsets.size() - 1; }
  std::span<const Entry> element(std::size_t k) const {
    return {entries.data() + offsets[k], offsets[k + 1] - offsets[k]};
  }

  /// Sum over elements and points of weight * values[point].
  double integrate(std::span<const double> values) const;
  /// values[p] = v(points[p]).
  std::vector<double> sample(const std::function<double(const Point&)>& v) const;
};

QuadratureRule vertex_rule(const Mesh& mesh, int level);
QuadratureRule reference_rule(const Mesh& mesh);

/// Global vertex-rule quadrature Q_h(v) at level n.
double integrate(const Mesh& mesh, const CoefficientField& v, int level);
/// Broken inner product (w, v)_h = Q_h(w v).
double broken_inner(const Mesh& mesh, const CoefficientField& w, const CoefficientField& v, int level);
/// Q_h(|grad q|^2).
double penalty_quadrature(const Mesh& mesh, const std::function<Point(const Point&)>& grad_q, int level);

}  // namespace coeffrec
