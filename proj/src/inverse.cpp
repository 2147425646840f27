#include "coeffrec/inverse.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "coeffrec/errors.hpp"

namespace coeffrec {

bool Subdomain::contains(const Point& x, int dim) const {
  if (full) return true;
  for (int c = 0; c < dim; ++c)
    if (x[c] < lo[c] || x[c] > hi[c]) return false;
  return true;
}

int InverseConfig::N0() const {
  const double r = T0 / tau();
  const long n0 = std::lround(r);
  if (std::abs(r - double(n0)) > 1e-9) throw std::invalid_argument("InverseConfig: T0 is not a multiple of tau");
  return int(n0);
}

void InverseConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("InverseConfig: gamma must be >= 0");
  if (!(bounds.c0 > 0.0 && bounds.c0 < bounds.c1 && std::isfinite(bounds.c1)))
    throw std::invalid_argument("InverseConfig: bounds must satisfy 0 < c0 < c1 < inf");
  if (kind == ProblemKind::parabolic) {
    if (N < 1) throw std::invalid_argument("InverseConfig: N must be >= 1");
    if (!(T > 0.0) || !(T0 >= 0.0) || !(T0 < T)) throw std::invalid_argument("InverseConfig: need 0 <= T0 < T");
    (void)N0();
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("InverseConfig: learning rate must be positive");
  if (max_iters < 0) throw std::invalid_argument("InverseConfig: max_iters must be >= 0");
}

namespace {

// (grad a . grad b) summed per element: sum_ij a_i b_j g_ij on K
double element_pairing(const P1Pattern& pattern, std::size_t k, std::span<const double> a,
                       std::span<const double> b) {
  const auto& e = pattern.mesh().element(k);
  const int nv = pattern.mesh().vertices_per_element();
  double s = 0.0;
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv; ++j) s += a[e[i]] * b[e[j]] * pattern.gradient_product(k, i, j);
  return s;
}

SparseMatrix observed_mass_matrix(const Mesh& mesh, const P1Pattern& pattern, const Subdomain& omega) {
  SparseMatrix m = pattern.zero_matrix();
  auto& v = m.values();
  const int nv = mesh.vertices_per_element();
  const double denom = double(nv * (nv + 1));
  for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
    if (!omega.contains(mesh.barycenter(k), mesh.dim())) continue;
    const double area = mesh.element_measure(k);
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) v[pattern.slot(k, i, j)] += area * (i == j ? 2.0 : 1.0) / denom;
  }
  return m;
}

double half_mass_norm_sq(const SparseMatrix& m, std::span<const double> a, std::span<const double> b,
                         std::vector<double>& scratch) {
  scratch.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) scratch[i] = a[i] - b[i];
  const auto ms = m * scratch;
  return 0.5 * dot(scratch, ms);
}

}  // namespace

StateModel::StateModel(const Mesh& mesh, PdeData data, InverseConfig cfg, ObservationSet obs)
    : mesh_(&mesh),
      cfg_(std::move(cfg)),
      obs_(std::move(obs)),
      data_(std::move(data)),
      rule_(make_rule(mesh, cfg_.mode)),
      pattern_(mesh) {
  cfg_.validate();
  mass_ = pattern_.mass();
  mass_omega_ = observed_mass_matrix(mesh, pattern_, cfg_.omega);
  // unit coefficient: element integrals are the element measures
  std::vector<double> areas(mesh.num_elements());
  for (std::size_t k = 0; k < areas.size(); ++k) areas[k] = mesh.element_measure(k);
  laplace_ = pattern_.stiffness(areas);
  const QuadratureRule ref = reference_rule(mesh);
  if (cfg_.kind == ProblemKind::elliptic) {
    if (!data_.f.value) throw std::invalid_argument("StateModel: elliptic source missing");
    if (obs_.z.size() != mesh.num_nodes()) throw std::invalid_argument("StateModel: observation size mismatch");
    load_ = assemble_load(mesh, ref, data_.f.value);
  } else {
    if (!data_.f_t || !data_.u0.value) throw std::invalid_argument("StateModel: parabolic data missing");
    const int n0 = cfg_.N0();
    if (obs_.N0 != n0 || obs_.N != cfg_.N || obs_.zn.size() != std::size_t(cfg_.N - n0 + 1))
      throw std::invalid_argument("StateModel: observation window inconsistent with configuration");
    for (const auto& z : obs_.zn)
      if (z.size() != mesh.num_nodes()) throw std::invalid_argument("StateModel: observation size mismatch");
    const double tau = cfg_.tau();
    loads_.reserve(cfg_.N);
    for (int n = 1; n <= cfg_.N; ++n) {
      const double t = n * tau;
      loads_.push_back(assemble_load(mesh, ref, [&](const Point& x) { return data_.f_t(x, t); }));
    }
    u0_ = l2_project_zero_trace(mesh, data_.u0).values();
  }
}

std::vector<double> StateModel::integrals_from_points(std::span<const double> point_values) const {
  return element_integrals(rule_, point_values);
}

StateModel::Result StateModel::evaluate(std::span<const double> s, bool with_gradient) const {
  const Mesh& mesh = *mesh_;
  Result r;
  const SparseMatrix a = pattern_.stiffness(s);
  std::vector<double> scratch;
  if (cfg_.kind == ProblemKind::elliptic) {
    const DirichletSolver solver(a, mesh);
    r.states.push_back(solver.solve(load_));
    const auto& u = r.states[0];
    r.data_fit = half_mass_norm_sq(mass_omega_, u, obs_.z, scratch);
    if (!with_gradient) return r;
    std::vector<double> diff(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) diff[i] = obs_.z[i] - u[i];
    r.adjoints.push_back(solver.solve(mass_omega_ * diff));
    r.sensitivity.resize(mesh.num_elements());
    for (std::size_t k = 0; k < mesh.num_elements(); ++k)
      r.sensitivity[k] = element_pairing(pattern_, k, u, r.adjoints[0]);
    return r;
  }

  const double tau = cfg_.tau();
  const int N = cfg_.N, n0 = cfg_.N0();
  const DirichletSolver step(mass_.axpy_same_pattern(tau, a), mesh);
  r.states.reserve(N + 1);
  r.states.push_back(u0_);
  std::vector<double> rhs(mesh.num_nodes());
  for (int n = 1; n <= N; ++n) {
    mass_.multiply(r.states.back(), rhs);
    const auto& b = loads_[n - 1];
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += tau * b[i];
    r.states.push_back(step.solve(rhs));
  }
  double fit = 0.0;
  for (int n = n0; n <= N; ++n) fit += half_mass_norm_sq(mass_omega_, r.states[n], obs_.at_step(n), scratch);
  r.data_fit = tau * fit;
  if (!with_gradient) return r;

  // W^N = 0; (M + tau A) W^(n-1) = M W^n + tau M_omega (z_n - U^n) for n >= N0
  r.adjoints.assign(N + 1, std::vector<double>(mesh.num_nodes(), 0.0));
  std::vector<double> diff(mesh.num_nodes());
  for (int n = N; n >= 1; --n) {
    mass_.multiply(r.adjoints[n], rhs);
    if (n >= n0) {
      const auto& z = obs_.at_step(n);
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = z[i] - r.states[n][i];
      const auto md = mass_omega_ * diff;
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += tau * md[i];
    }
    r.adjoints[n - 1] = step.solve(rhs);
  }
  r.sensitivity.assign(mesh.num_elements(), 0.0);
  for (int n = 1; n <= N; ++n)
    for (std::size_t k = 0; k < mesh.num_elements(); ++k)
      r.sensitivity[k] += tau * element_pairing(pattern_, k, r.states[n], r.adjoints[n - 1]);
  return r;
}

HybridObjective::Evaluation HybridObjective::evaluate(const MlpParams& params, bool with_gradient) const {
  return evaluate(params, with_gradient, model_->config().gradient_mode);
}

HybridObjective::Evaluation HybridObjective::evaluate(const MlpParams& params, bool with_gradient,
                                                      GradientMode mode) const {
  const StateModel& m = *model_;
  const QuadratureRule& rule = m.rule();
  const InverseConfig& cfg = m.config();
  const Mesh& mesh = m.mesh();
  const int d = mesh.dim();
  const std::size_t np = rule.points.size();

  std::vector<NetValue> net(np);
  std::vector<double> projected(np);
  std::vector<char> active(np);
  Evaluation ev;
  ev.min_coefficient = std::numeric_limits<double>::infinity();
  ev.max_coefficient = -ev.min_coefficient;
  for (std::size_t p = 0; p < np; ++p) {
    net[p] = coeffrec::evaluate(params, rule.points[p]);
    const Projected pr = project_box(net[p].value, cfg.bounds);
    projected[p] = pr.value;
    active[p] = pr.active;
    ev.min_coefficient = std::min(ev.min_coefficient, pr.value);
    ev.max_coefficient = std::max(ev.max_coefficient, pr.value);
  }
  // aggregated weight per distinct point
  std::vector<double> point_weight(np, 0.0);
  for (const auto& e : rule.entries) point_weight[e.point] += e.weight;
  double penalty = 0.0;
  for (std::size_t k = 0; k < rule.num_elements(); ++k) {
    double local = 0.0;
    for (const auto& e : rule.element(k)) {
      const Point& g = net[e.point].gradient;
      local += e.weight * (d == 1 ? g[0] * g[0] : g[0] * g[0] + g[1] * g[1]);
    }
    penalty += local;
  }

  const auto s = m.integrals_from_points(projected);
  const auto state = m.evaluate(s, with_gradient);
  ev.data_fit = state.data_fit;
  ev.penalty = penalty;
  ev.loss = state.data_fit + 0.5 * cfg.gamma * penalty;
  if (!with_gradient) return ev;

  ev.gradient.assign(params.size(), 0.0);
  if (mode == GradientMode::discrete_adjoint) {
    std::vector<double> seed_value(np, 0.0);
    for (std::size_t k = 0; k < rule.num_elements(); ++k)
      for (const auto& e : rule.element(k))
        if (active[e.point]) seed_value[e.point] += e.weight * state.sensitivity[k];
    for (std::size_t p = 0; p < np; ++p) {
      const Point& g = net[p].gradient;
      const double c = cfg.gamma * point_weight[p];
      param_vjp(params, rule.points[p], seed_value[p], Point{c * g[0], c * g[1]}, ev.gradient);
    }
    return ev;
  }

  // Riesz-smoothed: r_i = (J'(q), phi_i) with J'(q) = grad u . grad v - gamma Lap q,
  // then (M + K) G = r and an H1 pairing of G with dq/dtheta.
  const auto& grads = m.pattern().gradients();
  const int nv = mesh.vertices_per_element();
  std::vector<double> r(mesh.num_nodes(), 0.0);
  for (std::size_t k = 0; k < rule.num_elements(); ++k) {
    const auto& el = mesh.element(k);
    for (const auto& e : rule.element(k)) {
      const double data_term = active[e.point] ? e.weight * state.sensitivity[k] : 0.0;
      const Point& gq = net[e.point].gradient;
      for (int a = 0; a < nv; ++a) {
        const double pen = cfg.gamma * e.weight * (gq[0] * grads[k][a][0] + gq[1] * grads[k][a][1]);
        r[el[a]] += data_term * e.bary[a] + pen;
      }
    }
  }
  const SparseMatrix h1 = m.mass().axpy_same_pattern(1.0, m.laplace());
  ev.riesz = solve_spd(h1, r, 1e-12);
  const FeFunction G(mesh, ev.riesz);
  std::vector<double> seed_value(np, 0.0);
  std::vector<Point> seed_grad(np, Point{0.0, 0.0});
  for (std::size_t k = 0; k < rule.num_elements(); ++k) {
    const Point gk = G.element_gradient(k);
    const auto& el = mesh.element(k);
    for (const auto& e : rule.element(k)) {
      double gv = 0.0;
      for (int a = 0; a < nv; ++a) gv += e.bary[a] * ev.riesz[el[a]];
      seed_value[e.point] += e.weight * gv;
      seed_grad[e.point][0] += e.weight * gk[0];
      seed_grad[e.point][1] += e.weight * gk[1];
    }
  }
  for (std::size_t p = 0; p < np; ++p) param_vjp(params, rule.points[p], seed_value[p], seed_grad[p], ev.gradient);
  return ev;
}

FemObjective::Evaluation FemObjective::evaluate(std::span<const double> q, bool with_gradient) const {
  const StateModel& m = *model_;
  const QuadratureRule& rule = m.rule();
  const Mesh& mesh = m.mesh();
  const int nv = mesh.vertices_per_element();
  if (q.size() != mesh.num_nodes()) throw std::invalid_argument("FemObjective: nodal size mismatch");
  std::vector<double> s(mesh.num_elements(), 0.0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto& el = mesh.element(k);
    for (const auto& e : rule.element(k)) {
      double v = 0.0;
      for (int a = 0; a < nv; ++a) v += e.bary[a] * q[el[a]];
      s[k] += e.weight * v;
    }
  }
  Evaluation ev;
  const auto kq = m.laplace() * q;
  ev.penalty = dot(q, kq);
  const auto state = m.evaluate(s, with_gradient);
  ev.data_fit = state.data_fit;
  ev.loss = ev.data_fit + 0.5 * m.config().gamma * ev.penalty;
  if (!with_gradient) return ev;
  ev.gradient.assign(mesh.num_nodes(), 0.0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto& el = mesh.element(k);
    for (const auto& e : rule.element(k))
      for (int a = 0; a < nv; ++a) ev.gradient[el[a]] += e.weight * e.bary[a] * state.sensitivity[k];
  }
  for (std::size_t i = 0; i < q.size(); ++i) ev.gradient[i] += m.config().gamma * kq[i];
  return ev;
}

std::vector<double> FemObjective::riesz(std::span<const double> g) const {
  const SparseMatrix h1 = model_->mass().axpy_same_pattern(1.0, model_->laplace());
  return solve_spd(h1, g, 1e-12);
}

double loss_elliptic(const StateModel& model, const MlpParams& params) {
  if (model.config().kind != ProblemKind::elliptic) throw std::invalid_argument("loss_elliptic: parabolic model");
  return HybridObjective(model).evaluate(params, false).loss;
}
double loss_elliptic(const StateModel& model, std::span<const double> q) {
  if (model.config().kind != ProblemKind::elliptic) throw std::invalid_argument("loss_elliptic: parabolic model");
  return FemObjective(model).evaluate(q, false).loss;
}
double loss_parabolic(const StateModel& model, const MlpParams& params) {
  if (model.config().kind != ProblemKind::parabolic) throw std::invalid_argument("loss_parabolic: elliptic model");
  return HybridObjective(model).evaluate(params, false).loss;
}
double loss_parabolic(const StateModel& model, std::span<const double> q) {
  if (model.config().kind != ProblemKind::parabolic) throw std::invalid_argument("loss_parabolic: elliptic model");
  return FemObjective(model).evaluate(q, false).loss;
}

FeFunction adjoint_elliptic(const StateModel& model, const FeFunction& u, std::span<const double> s) {
  const Mesh& mesh = model.mesh();
  const DirichletSolver solver(model.pattern().stiffness(s), mesh);
  const auto& z = model.observations().z;
  std::vector<double> diff(mesh.num_nodes());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = z[i] - u[i];
  return FeFunction(mesh, solver.solve(model.observed_mass() * diff));
}

std::vector<std::vector<double>> adjoint_parabolic(const StateModel& model,
                                                   std::span<const std::vector<double>> states,
                                                   std::span<const double> s) {
  const InverseConfig& cfg = model.config();
  const Mesh& mesh = model.mesh();
  const double tau = cfg.tau();
  const int N = cfg.N, n0 = cfg.N0();
  if (states.size() != std::size_t(N + 1)) throw std::invalid_argument("adjoint_parabolic: need U^0..U^N");
  const DirichletSolver step(model.mass().axpy_same_pattern(tau, model.pattern().stiffness(s)), mesh);
  std::vector<std::vector<double>> w(N + 1, std::vector<double>(mesh.num_nodes(), 0.0));
  std::vector<double> rhs(mesh.num_nodes()), diff(mesh.num_nodes());
  for (int n = N; n >= 1; --n) {
    model.mass().multiply(w[n], rhs);
    if (n >= n0) {
      const auto& z = model.observations().at_step(n);
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = z[i] - states[n][i];
      const auto md = model.observed_mass() * diff;
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += tau * md[i];
    }
    w[n - 1] = step.solve(rhs);
  }
  return w;
}

std::vector<double> gradient_wrt_theta(const StateModel& model, const MlpParams& params) {
  return HybridObjective(model).evaluate(params, true).gradient;
}

CoefficientField projected_network(const MlpParams& params, const BoxBounds& bounds) {
  return {[params, bounds](const Point& x) { return project_box(forward(params, x), bounds).value; }, {}};
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool stalled(const std::vector<double>& hist, const InverseConfig& cfg) {
  const std::size_t w = std::size_t(std::max(cfg.stop_window, 1));
  if (hist.size() <= w) return false;
  const double now = hist.back(), before = hist[hist.size() - 1 - w];
  return std::abs(now - before) <= cfg.stop_rel_change * std::abs(before);
}

}  // namespace

ReconstructionResult train(const StateModel& model, MlpParams init, const ErrorProbe& error,
                           ReconstructionResult* partial) {
  const InverseConfig& cfg = model.config();
  const HybridObjective objective(model);
  ReconstructionResult res;
  const auto t0 = Clock::now();
  MlpParams params = std::move(init);
  const std::size_t n = params.size();
  std::vector<double> m1(n, 0.0), m2(n, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  auto record = [&](const HybridObjective::Evaluation& ev, int it) {
    res.loss_history.push_back(ev.loss);
    res.data_fit_history.push_back(ev.data_fit);
    res.penalty_history.push_back(ev.penalty);
    res.wall_ms.push_back(ms_since(t0));
    if (error && cfg.error_every > 0 && it % cfg.error_every == 0)
      res.error_history.emplace_back(it, error(projected_network(params, cfg.bounds)));
  };
  auto fail = [&](int it) {
    res.diverged = true;
    res.iterations = it;
    res.params = params;
    res.total_ms = ms_since(t0);
    res.message = "non-finite loss at iteration " + std::to_string(it);
    if (partial) *partial = res;
    throw Divergence("train: " + res.message, it);
  };

  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const auto ev = objective.evaluate(params, true);
    if (!std::isfinite(ev.loss)) fail(it);
    record(ev, it);
    if (stalled(res.loss_history, cfg)) break;
    b1t *= b1;
    b2t *= b2;
    auto flat = params.flat();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = ev.gradient[i];
      m1[i] = b1 * m1[i] + (1 - b1) * g;
      m2[i] = b2 * m2[i] + (1 - b2) * g * g;
      const double mhat = m1[i] / (1 - b1t);
      const double vhat = m2[i] / (1 - b2t);
      flat[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
  if (it == cfg.max_iters) {
    const auto ev = objective.evaluate(params, false);
    if (!std::isfinite(ev.loss)) fail(it);
    res.loss_history.push_back(ev.loss);
    res.data_fit_history.push_back(ev.data_fit);
    res.penalty_history.push_back(ev.penalty);
    res.wall_ms.push_back(ms_since(t0));
  }
  if (error && (res.error_history.empty() || res.error_history.back().first != it))
    res.error_history.emplace_back(it, error(projected_network(params, cfg.bounds)));
  res.iterations = it;
  res.params = std::move(params);
  res.total_ms = ms_since(t0);
  return res;
}

ReconstructionResult train_baseline_fem(const StateModel& model, std::vector<double> q, const ErrorProbe& error) {
  const InverseConfig& cfg = model.config();
  const Mesh& mesh = model.mesh();
  const FemObjective objective(model);
  ReconstructionResult res;
  const auto t0 = Clock::now();
  if (q.size() != mesh.num_nodes()) throw std::invalid_argument("train_baseline_fem: init size mismatch");
  for (auto& v : q) v = project_box(v, cfg.bounds).value;

  auto field = [&](const std::vector<double>& values) { return FeFunction(mesh, values).as_field(); };
  auto ev = objective.evaluate(q, true);
  if (!std::isfinite(ev.loss)) throw Divergence("train_baseline_fem: non-finite initial loss", 0);
  double step = cfg.baseline_step;
  auto record = [&](int it) {
    res.loss_history.push_back(ev.loss);
    res.data_fit_history.push_back(ev.data_fit);
    res.penalty_history.push_back(ev.penalty);
    res.wall_ms.push_back(ms_since(t0));
    if (error && cfg.error_every > 0 && it % cfg.error_every == 0) res.error_history.emplace_back(it, error(field(q)));
  };
  record(0);
  int it = 0;
  for (; it < cfg.baseline_max_iters; ++it) {
    const auto dir = objective.riesz(ev.gradient);
    bool accepted = false;
    for (int tries = 0; tries < 60 && !accepted; ++tries) {
      std::vector<double> trial(q.size());
      for (std::size_t i = 0; i < q.size(); ++i) trial[i] = project_box(q[i] - step * dir[i], cfg.bounds).value;
      auto trial_ev = objective.evaluate(trial, true);
      if (std::isfinite(trial_ev.loss) && trial_ev.loss <= ev.loss) {
        q = std::move(trial);
        ev = std::move(trial_ev);
        step *= cfg.baseline_growth;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;  // no descent at any step size
    record(it + 1);
    if (stalled(res.loss_history, cfg)) {
      ++it;
      break;
    }
  }
  if (error && (res.error_history.empty() || res.error_history.back().first != it))
    res.error_history.emplace_back(it, error(field(q)));
  res.iterations = it;
  res.nodal_q = std::move(q);
  res.total_ms = ms_since(t0);
  return res;
}

void write_training_log(const ReconstructionResult& r, const std::filesystem::path& file, bool with_timing) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_training_log: cannot open " + file.string());
  out.precision(12);
  out << "iteration,loss,data_fit,penalty,relative_error" << (with_timing ? ",wall_ms" : "") << '\n';
  std::size_t e = 0;
  for (std::size_t i = 0; i < r.loss_history.size(); ++i) {
    out << i << ',' << r.loss_history[i] << ',' << r.data_fit_history[i] << ',' << r.penalty_history[i] << ',';
    while (e < r.error_history.size() && std::size_t(r.error_history[e].first) < i) ++e;
    if (e < r.error_history.size() && std::size_t(r.error_history[e].first) == i) out << r.error_history[e].second;
    if (with_timing) out << ',' << r.wall_ms[i];
    out << '\n';
  }
}

}  // namespace coeffrec
