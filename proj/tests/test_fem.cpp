#include <cmath>
#include <numbers>

#include "coeffrec/fem.hpp"
#include "coeffrec/forward.hpp"
#include "doctest.h"

using namespace coeffrec;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("1D mass and stiffness entries") {
  const Mesh m = unit_interval_mesh(2);
  const double h = 0.5;
  const auto mass = assemble_mass(m);
  CHECK(mass.at(1, 1) == doctest::Approx(2 * h / 3));
  CHECK(mass.at(0, 1) == doctest::Approx(h / 6));
  CHECK(mass.at(0, 0) == doctest::Approx(h / 3));
  const auto k = assemble_stiffness(m, CoefficientField::constant(1.0), AssemblyMode::exact());
  CHECK(k.at(1, 1) == doctest::Approx(4.0));
  CHECK(k.at(0, 1) == doctest::Approx(-2.0));
  CHECK(k.at(0, 2) == 0.0);
}

TEST_CASE("2D mass sums to area, stiffness annihilates constants") {
  const Mesh m = unit_square_mesh(6);
  const auto mass = assemble_mass(m);
  double total = 0;
  for (double v : mass.values()) total += v;
  CHECK(total == doctest::Approx(1.0));
  const CoefficientField q{[](const Point& x) { return 1.0 + x[0] * x[1]; }, {}};
  for (AssemblyMode mode : {AssemblyMode::exact(), AssemblyMode::quadrature(0), AssemblyMode::quadrature(2)}) {
    const auto k = assemble_stiffness(m, q, mode);
    CHECK(k.asymmetry() < 1e-14);
    const auto r = k * std::vector<double>(m.num_nodes(), 1.0);
    for (double v : r) CHECK(std::abs(v) < 1e-12);
  }
}

TEST_CASE("stiffness is linear in the coefficient integrals") {
  const Mesh m = unit_square_mesh(4);
  const P1Pattern p(m);
  std::vector<double> s1(m.num_elements()), s2(m.num_elements());
  for (std::size_t k = 0; k < s1.size(); ++k) {
    s1[k] = 1.0 + 0.01 * double(k);
    s2[k] = 2.0 - 0.003 * double(k);
  }
  std::vector<double> s3(s1.size());
  for (std::size_t k = 0; k < s1.size(); ++k) s3[k] = 2 * s1[k] + 3 * s2[k];
  const auto a1 = p.stiffness(s1), a2 = p.stiffness(s2), a3 = p.stiffness(s3);
  for (std::size_t i = 0; i < a3.nnz(); ++i)
    CHECK(a3.values()[i] == doctest::Approx(2 * a1.values()[i] + 3 * a2.values()[i]));
}

TEST_CASE("L2 projection converges at second order") {
  const CoefficientField v{[](const Point& x) { return std::sin(pi * x[0]) * std::cos(x[1]); }, {}};
  double prev = 0.0;
  for (int n : {4, 8, 16}) {
    const Mesh m = unit_square_mesh(n);
    const auto p = l2_project(m, v);
    const auto rule = reference_rule(m);
    std::vector<double> err(rule.points.size());
    double s = 0;
    for (std::size_t k = 0; k < m.num_elements(); ++k)
      for (const auto& e : rule.element(k)) {
        const double d = p.evaluate(rule.points[e.point]) - v(rule.points[e.point]);
        s += e.weight * d * d;
      }
    const double e = std::sqrt(s);
    if (prev > 0) CHECK(prev / e > 3.5);
    prev = e;
  }
}

TEST_CASE("zero-trace projection vanishes on the boundary and reproduces P1 interior functions") {
  const Mesh m = unit_interval_mesh(10);
  const CoefficientField hat{[](const Point& x) { return x[0] < 0.5 ? x[0] : 1.0 - x[0]; }, {}};
  const auto p = l2_project_zero_trace(m, hat);
  CHECK(p[0] == 0.0);
  CHECK(p[10] == 0.0);
  CHECK(p[5] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("Galerkin orthogonality of the elliptic solution") {
  const Mesh m = unit_square_mesh(8);
  const CoefficientField q{[](const Point& x) { return 2.0 + x[0]; }, {}};
  const auto f = CoefficientField::constant(1.0);
  const auto u = solve_elliptic({&m, q, f, AssemblyMode::exact()});
  const auto a = assemble_stiffness(m, q, AssemblyMode::exact());
  const auto b = assemble_load(m, f);
  const auto au = a * u.values();
  for (std::size_t i = 0; i < m.num_nodes(); ++i)
    if (!m.is_boundary(i)) CHECK(au[i] == doctest::Approx(b[i]).epsilon(1e-8));
}

TEST_CASE("Dirichlet elimination keeps symmetry and the pattern") {
  const Mesh m = unit_square_mesh(3);
  auto a = assemble_stiffness(m, CoefficientField::constant(1.0), AssemblyMode::exact());
  const std::size_t nnz = a.nnz();
  const auto sys = apply_dirichlet(a, std::vector<double>(m.num_nodes(), 1.0), m);
  CHECK(sys.matrix.nnz() == nnz);
  CHECK(sys.matrix.asymmetry() == 0.0);
  for (int i : m.boundary_nodes()) {
    CHECK(sys.matrix.at(i, i) == 1.0);
    CHECK(sys.rhs[i] == 0.0);
  }
}

TEST_CASE("FE function evaluation, gradients and transfer") {
  const Mesh m = unit_square_mesh(4);
  std::vector<double> v(m.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + 2.0 * m.node(i)[0] - m.node(i)[1];
  const FeFunction u(m, v);
  CHECK(u.evaluate({0.3, 0.7}) == doctest::Approx(1.0 + 0.6 - 0.7));
  const Point g = u.gradient({0.3, 0.7});
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(-1.0));
  const Mesh fine = refine_uniform(m);
  const auto pf = l2_project(fine, u.as_field());
  const auto back = transfer(pf, m);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == doctest::Approx(v[i]).epsilon(1e-9));
  CHECK_THROWS_AS(transfer(FeFunction(unit_square_mesh(3)), m), std::invalid_argument);
  CHECK(mass_norm(assemble_mass(m), std::vector<double>(m.num_nodes(), 1.0)) == doctest::Approx(1.0));
}

TEST_CASE("quadrature assembly converges to exact assembly") {
  const Mesh m = unit_square_mesh(4);
  const CoefficientField q{[](const Point& x) { return 2.0 + std::sin(2 * pi * x[0]) * std::sin(2 * pi * x[1]); },
                           {}};
  const auto exact = assemble_stiffness(m, q, AssemblyMode::exact());
  double prev = 0;
  for (int n = 0; n <= 3; ++n) {
    const auto a = assemble_stiffness(m, q, AssemblyMode::quadrature(n));
    double e = 0;
    for (std::size_t i = 0; i < a.nnz(); ++i) e = std::max(e, std::abs(a.values()[i] - exact.values()[i]));
    if (n > 0) {
      CHECK(prev / e >= 3.0);
      CHECK(prev / e <= 5.0);
    }
    prev = e;
  }
}
