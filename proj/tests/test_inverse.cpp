#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "coeffrec/errors.hpp"
#include "coeffrec/inverse.hpp"
#include "doctest.h"

using namespace coeffrec;

namespace {

constexpr double pi = std::numbers::pi;

const CoefficientField q_true{[](const Point& x) { return 2.0 + std::sin(2 * pi * x[0]) * (1.0 + 0.5 * x[1]); }, {}};

struct Setup {
  std::unique_ptr<Mesh> mesh;
  std::unique_ptr<StateModel> model;
};

PdeData data_for(ProblemKind kind) {
  PdeData d;
  d.f = CoefficientField::constant(10.0);
  d.f_t = [](const Point&, double t) { return 10.0 * t; };
  d.u0 = {[](const Point& x) { return 4.0 * x[0] * (1.0 - x[0]); }, {}};
  (void)kind;
  return d;
}

// Data generated by the same discrete model at the interpolated truth, then
// perturbed deterministically so the misfit and its gradient are nonzero.
Setup make_setup(ProblemKind kind, int dim, AssemblyMode mode, double gamma, bool partial_omega = false,
                 int m = 0, int N = 10, double T0 = 0.5) {
  Setup s;
  if (m == 0) m = dim == 1 ? 10 : 4;
  s.mesh = std::make_unique<Mesh>(dim == 1 ? unit_interval_mesh(m) : unit_square_mesh(m));
  InverseConfig cfg;
  cfg.kind = kind;
  cfg.gamma = gamma;
  cfg.mode = mode;
  cfg.T = 1.0;
  cfg.T0 = kind == ProblemKind::parabolic ? T0 : 0.0;
  cfg.N = N;
  if (partial_omega) cfg.omega = Subdomain{false, {0.2, 0.1}, {0.8, 0.9}};
  const std::size_t nn = s.mesh->num_nodes();
  ObservationSet obs;
  obs.kind = kind;
  if (kind == ProblemKind::elliptic) {
    obs.z.assign(nn, 0.0);
  } else {
    obs.N0 = cfg.N0();
    obs.N = N;
    obs.zn.assign(std::size_t(N - obs.N0 + 1), std::vector<double>(nn, 0.0));
  }
  const StateModel blank(*s.mesh, data_for(kind), cfg, obs);
  const auto truth = blank.integrals_from_points(blank.rule().sample(q_true.value));
  const auto states = blank.evaluate(truth, false).states;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 0.02);
  if (kind == ProblemKind::elliptic) {
    for (std::size_t i = 0; i < nn; ++i) obs.z[i] = states[0][i] + g(rng);
  } else {
    for (int n = obs.N0; n <= N; ++n)
      for (std::size_t i = 0; i < nn; ++i) obs.zn[std::size_t(n - obs.N0)][i] = states[std::size_t(n)][i] + g(rng);
  }
  s.model = std::make_unique<StateModel>(*s.mesh, data_for(kind), cfg, obs);
  return s;
}

MlpParams small_net(int dim, std::uint64_t seed, double output_bias) {
  return glorot_init({dim, 6, 6, 1}, seed, output_bias);
}

std::vector<double> random_direction(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> d(n);
  for (auto& v : d) v = u(rng);
  return d;
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30}); }

double hybrid_directional_gap(const StateModel& model, MlpParams p, std::uint64_t seed) {
  const HybridObjective obj(model);
  const auto g = obj.evaluate(p, true, GradientMode::discrete_adjoint).gradient;
  std::mt19937_64 rng(seed);
  const auto d = random_direction(p.size(), rng);
  const double h = 1e-6;
  MlpParams plus = p, minus = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    plus.flat()[i] += h * d[i];
    minus.flat()[i] -= h * d[i];
  }
  const double fd = (obj.evaluate(plus, false).loss - obj.evaluate(minus, false).loss) / (2 * h);
  CHECK(std::abs(fd) > 1e-8);
  return relative_gap(fd, dot(g, d));
}

double fem_directional_gap(const StateModel& model, std::vector<double> q, std::uint64_t seed) {
  const FemObjective obj(model);
  const auto g = obj.evaluate(q, true).gradient;
  std::mt19937_64 rng(seed);
  const auto d = random_direction(q.size(), rng);
  const double h = 1e-6;
  auto plus = q, minus = q;
  for (std::size_t i = 0; i < q.size(); ++i) {
    plus[i] += h * d[i];
    minus[i] -= h * d[i];
  }
  const double fd = (obj.evaluate(plus, false).loss - obj.evaluate(minus, false).loss) / (2 * h);
  CHECK(std::abs(fd) > 1e-8);
  return relative_gap(fd, dot(g, d));
}

struct Case {
  ProblemKind kind;
  int dim;
  AssemblyMode mode;
  double output_bias;  // 2.25 stays inside [0.5, 4]; 3.9 pushes part of the net above c1
  bool partial;
};

}  // namespace

TEST_CASE("adjoint gradients match central differences across configurations") {
  std::vector<Case> cases;
  for (auto kind : {ProblemKind::elliptic, ProblemKind::parabolic})
    for (int dim : {1, 2})
      for (auto mode : {AssemblyMode::exact(), AssemblyMode::quadrature(0), AssemblyMode::quadrature(2)})
        for (double bias : {2.25, 3.9}) cases.push_back({kind, dim, mode, bias, dim == 2 && bias > 3});
  REQUIRE(cases.size() >= 20);
  int clipped_cases = 0;
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    CAPTURE(int(c.kind));
    CAPTURE(c.dim);
    CAPTURE(c.mode.level);
    CAPTURE(c.output_bias);
    const auto s = make_setup(c.kind, c.dim, c.mode, 1e-3, c.partial, 0, 6, 0.5);
    const auto p = small_net(c.dim, seed++, c.output_bias);
    const auto ev = HybridObjective(*s.model).evaluate(p, false);
    if (ev.max_coefficient >= 4.0) ++clipped_cases;
    CHECK(hybrid_directional_gap(*s.model, p, seed++) <= 1e-4);

    std::vector<double> q(s.mesh->num_nodes());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = q_true(s.mesh->node(i)) + 0.1 * std::cos(3.0 * double(i));
    CHECK(fem_directional_gap(*s.model, q, seed++) <= 1e-4);
  }
  CHECK(clipped_cases >= 4);
}

TEST_CASE("element sensitivities are the derivative of the misfit in the element integrals") {
  for (auto kind : {ProblemKind::elliptic, ProblemKind::parabolic}) {
    const auto s = make_setup(kind, 2, AssemblyMode::quadrature(1), 0.0, true, 5, 8, 0.25);
    const auto& model = *s.model;
    auto sk = model.integrals_from_points(model.rule().sample([](const Point& x) { return 1.5 + x[0]; }));
    const auto r = model.evaluate(sk, true);
    std::mt19937_64 rng(5);
    const auto d = random_direction(sk.size(), rng);
    const double h = 1e-7;
    auto plus = sk, minus = sk;
    for (std::size_t k = 0; k < sk.size(); ++k) {
      plus[k] += h * d[k] * sk[k];
      minus[k] -= h * d[k] * sk[k];
    }
    double gd = 0.0;
    for (std::size_t k = 0; k < sk.size(); ++k) gd += r.sensitivity[k] * d[k] * sk[k];
    const double fd = (model.evaluate(plus, false).data_fit - model.evaluate(minus, false).data_fit) / (2 * h);
    CHECK(relative_gap(fd, gd) <= 1e-5);
  }
}

TEST_CASE("elliptic adjoint solves the adjoint equation") {
  const auto s = make_setup(ProblemKind::elliptic, 2, AssemblyMode::exact(), 0.0, true, 6);
  const auto& model = *s.model;
  const Mesh& mesh = *s.mesh;
  const auto sk = model.integrals_from_points(model.rule().sample(q_true.value));
  const auto r = model.evaluate(sk, true);
  const FeFunction u(mesh, r.states[0]);
  const auto v = adjoint_elliptic(model, u, sk);
  const auto a = model.pattern().stiffness(sk);
  const auto lhs = a * v.values();
  std::vector<double> diff(mesh.num_nodes());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = model.observations().z[i] - u[i];
  const auto rhs = model.observed_mass() * diff;
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    if (mesh.is_boundary(i)) {
      CHECK(v[i] == 0.0);
      continue;
    }
    CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-8).scale(1e-6));
    CHECK(v[i] == doctest::Approx(r.adjoints[0][i]).epsilon(1e-10));
  }
  // sensitivities are grad u . grad v times the element integral's factor
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    const auto gu = u.element_gradient(k), gv = v.element_gradient(k);
    CHECK(r.sensitivity[k] == doctest::Approx(gu[0] * gv[0] + gu[1] * gv[1]).epsilon(1e-8).scale(1e-9));
  }
}

TEST_CASE("parabolic adjoint: terminal value zero, duality with the linearized state") {
  const auto s = make_setup(ProblemKind::parabolic, 1, AssemblyMode::exact(), 0.0, false, 12, 10, 0.5);
  const auto& model = *s.model;
  const auto sk = model.integrals_from_points(model.rule().sample(q_true.value));
  const auto r = model.evaluate(sk, true);
  const auto w = adjoint_parabolic(model, r.states, sk);
  REQUIRE(w.size() == 11);
  for (double v : w.back()) CHECK(v == 0.0);
  for (std::size_t n = 0; n < w.size(); ++n)
    for (std::size_t i = 0; i < w[n].size(); ++i) CHECK(w[n][i] == doctest::Approx(r.adjoints[n][i]).epsilon(1e-10));
  CHECK_THROWS_AS(adjoint_parabolic(model, std::span(r.states).first(5), sk), std::invalid_argument);
}

TEST_CASE("parabolic misfit sums the full observation window") {
  // T0 = 0.5, N = 200: steps 100..200, i.e. 101 terms
  const auto s = make_setup(ProblemKind::parabolic, 1, AssemblyMode::quadrature(0), 0.0, false, 8, 200, 0.5);
  const auto& model = *s.model;
  CHECK(model.config().N0() == 100);
  CHECK(model.observations().zn.size() == 101);
  const auto sk = model.integrals_from_points(model.rule().sample([](const Point&) { return 1.0; }));
  const auto r = model.evaluate(sk, false);
  const double tau = model.config().tau();
  double brute = 0.0;
  int terms = 0;
  for (int n = 100; n <= 200; ++n, ++terms) {
    std::vector<double> d(r.states[n].size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = r.states[n][i] - model.observations().at_step(n)[i];
    brute += 0.5 * dot(d, model.mass() * d);
  }
  CHECK(terms == 101);
  CHECK(r.data_fit == doctest::Approx(tau * brute).epsilon(1e-12));
}

TEST_CASE("observation window and configuration validation") {
  InverseConfig cfg;
  cfg.kind = ProblemKind::parabolic;
  cfg.T = 1.0;
  cfg.N = 10;
  cfg.T0 = 0.55;
  CHECK_THROWS_AS(cfg.N0(), std::invalid_argument);
  cfg.T0 = 0.5;
  CHECK(cfg.N0() == 5);
  CHECK_NOTHROW(cfg.validate());
  cfg.N = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.N = 10;
  cfg.gamma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.gamma = 0.0;
  cfg.bounds = {2.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.bounds = {0.5, 4.0};
  cfg.T0 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  Subdomain omega{false, {0.3, 0.0}, {0.7, 1.0}};
  CHECK(omega.contains({0.5, 0.2}, 1));
  CHECK(!omega.contains({0.1, 0.2}, 1));
  CHECK(Subdomain{}.contains({0.0, 1.0}, 2));
}

TEST_CASE("H1 Riesz map of a constant load is that constant") {
  const auto s = make_setup(ProblemKind::elliptic, 2, AssemblyMode::exact(), 0.0, false, 6);
  const FemObjective obj(*s.model);
  const double c = 1.7;
  const auto r = s.model->mass() * std::vector<double>(s.mesh->num_nodes(), c);
  for (double g : obj.riesz(r)) CHECK(g == doctest::Approx(c).epsilon(1e-8));
}

TEST_CASE("Riesz-mode hybrid gradient is a descent direction close to the adjoint gradient") {
  const auto s = make_setup(ProblemKind::elliptic, 1, AssemblyMode::quadrature(0), 1e-4, false, 16);
  const HybridObjective obj(*s.model);
  const auto p = small_net(1, 3, 2.25);
  const auto ga = obj.evaluate(p, true, GradientMode::discrete_adjoint).gradient;
  const auto ev = obj.evaluate(p, true, GradientMode::riesz);
  CHECK(ev.riesz.size() == s.mesh->num_nodes());
  const double cosine = dot(ga, ev.gradient) / std::sqrt(dot(ga, ga) * dot(ev.gradient, ev.gradient));
  CHECK(cosine > 0.9);
}

TEST_CASE("penalty term of the loss is gamma/2 times the gradient energy") {
  const auto s = make_setup(ProblemKind::elliptic, 1, AssemblyMode::exact(), 0.0, false, 8);
  // q = a x + b with tanh-free path: compare against exact |grad q|^2 via FEM
  std::vector<double> q(s.mesh->num_nodes());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = 1.0 + 2.0 * s.mesh->node(i)[0];
  const auto ev = FemObjective(*s.model).evaluate(q, false);
  CHECK(ev.penalty == doctest::Approx(4.0));
}

TEST_CASE("training: zero iterations, history lengths, descent and smoothing") {
  auto base = make_setup(ProblemKind::elliptic, 1, AssemblyMode::quadrature(0), 1e-5, false, 16);
  InverseConfig cfg = base.model->config();

  SUBCASE("zero iterations gives a single loss record") {
    cfg.max_iters = 0;
    const StateModel m(*base.mesh, data_for(ProblemKind::elliptic), cfg, base.model->observations());
    const auto r = train(m, small_net(1, 7, 2.25));
    CHECK(r.iterations == 0);
    CHECK(r.loss_history.size() == 1);
    REQUIRE(r.params.has_value());
  }
  SUBCASE("ADAM lowers the loss and records every iteration") {
    cfg.max_iters = 300;
    const StateModel m(*base.mesh, data_for(ProblemKind::elliptic), cfg, base.model->observations());
    int probes = 0;
    const auto r = train(m, small_net(1, 7, 2.25), [&](const CoefficientField&) { return double(++probes); });
    CHECK(r.loss_history.size() == std::size_t(r.iterations) + 1);
    CHECK(r.loss_history.back() < 0.5 * r.loss_history.front());
    CHECK(r.error_history.size() == 4);  // 0, 100, 200, 300
    CHECK(r.error_history.back().first == 300);
  }
  SUBCASE("a large penalty flattens the network") {
    cfg.gamma = 10.0;
    cfg.max_iters = 400;
    cfg.learning_rate = 1e-2;
    const StateModel m(*base.mesh, data_for(ProblemKind::elliptic), cfg, base.model->observations());
    const auto r = train(m, small_net(1, 8, 2.25));
    CHECK(r.penalty_history.back() < 0.05 * r.penalty_history.front());
  }
  SUBCASE("the FEM baseline never increases the loss and stays in the box") {
    cfg.baseline_max_iters = 60;
    const StateModel m(*base.mesh, data_for(ProblemKind::elliptic), cfg, base.model->observations());
    const auto r = train_baseline_fem(m, std::vector<double>(base.mesh->num_nodes(), 2.25));
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) CHECK(r.loss_history[i] <= r.loss_history[i - 1]);
    CHECK(r.loss_history.back() < r.loss_history.front());
    for (double v : *r.nodal_q) {
      CHECK(v >= cfg.bounds.c0);
      CHECK(v <= cfg.bounds.c1);
    }
    CHECK_THROWS_AS(train_baseline_fem(m, std::vector<double>(3, 2.0)), std::invalid_argument);
  }
  SUBCASE("a runaway learning rate is reported as divergence or stays finite") {
    cfg.max_iters = 50;
    cfg.learning_rate = 1e6;
    const StateModel m(*base.mesh, data_for(ProblemKind::elliptic), cfg, base.model->observations());
    try {
      const auto r = train(m, small_net(1, 9, 2.25));
      for (double v : r.loss_history) CHECK(std::isfinite(v));
    } catch (const Divergence& e) {
      CHECK(e.iteration() >= 0);
    }
  }
}

TEST_CASE("projected network stays in the box") {
  const auto p = glorot_init({1, 4, 1}, 3, 10.0);
  const auto f = projected_network(p, {0.5, 4.0});
  for (double x = 0.0; x <= 1.0; x += 0.05) CHECK(f({x, 0.0}) == 4.0);
}
