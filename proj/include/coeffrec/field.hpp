#pragma once

#include <functional>

#include "coeffrec/mesh.hpp"

namespace coeffrec {

/// A pointwise-evaluable scalar field on the closed domain, optionally with
/// its spatial gradient. Used for coefficients, sources and initial values.
struct CoefficientField {
  std::function<double(const Point&)> value;
  std::function<Point(const Point&)> gradient;

  double operator()(const Point& x) const { return value(x); }
  bool has_gradient() const { return static_cast<bool>(gradient); }

  static CoefficientField constant(double c) {
    return {[c](const Point&) { return c; }, [](const Point&) { return Point{0.0, 0.0}; }};
  }
};

/// Space-time source f(x, t).
using SpaceTimeField = std::function<double(const Point&, double)>;

}  // namespace coeffrec
