#include "coeffrec/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include "coeffrec/config.hpp"
#include "coeffrec/errors.hpp"
#include "coeffrec/forward.hpp"

#ifndef COEFFREC_CONFIG_DIR
#define COEFFREC_CONFIG_DIR "configs"
#endif

namespace coeffrec {

namespace {

constexpr double pi = std::numbers::pi;

// Analytic closures of the catalog. Numeric settings come from the configs.
struct CatalogEntry {
  std::string title;
  ProblemKind kind;
  int dim;
  CoefficientField q_true;
  CoefficientField f;
  SpaceTimeField f_t;
  CoefficientField u0;
};

CoefficientField sine_1d() {
  return {[](const Point& x) { return 2.0 + std::sin(2 * pi * x[0]); },
          [](const Point& x) { return Point{2 * pi * std::cos(2 * pi * x[0]), 0.0}; }};
}

CoefficientField sine_2d() {
  return {[](const Point& x) { return 2.0 + std::sin(2 * pi * x[0]) * std::sin(2 * pi * x[1]); },
          [](const Point& x) {
            return Point{2 * pi * std::cos(2 * pi * x[0]) * std::sin(2 * pi * x[1]),
                         2 * pi * std::sin(2 * pi * x[0]) * std::cos(2 * pi * x[1])};
          }};
}

CoefficientField bump_1d() {
  return {[](const Point& x) { return 2.0 + 10.0 * (1.0 - x[0]) * x[0] * x[0]; },
          [](const Point& x) { return Point{10.0 * (2.0 * x[0] - 3.0 * x[0] * x[0]), 0.0}; }};
}

CoefficientField parabola_x1() {
  return {[](const Point& x) { return 4.0 * x[0] * (1.0 - x[0]); },
          [](const Point& x) { return Point{4.0 - 8.0 * x[0], 0.0}; }};
}

SpaceTimeField linear_in_time() {
  return [](const Point&, double t) { return 10.0 * t; };
}

CatalogEntry catalog(const std::string& id) {
  if (id == "ex51i")
    return {"elliptic 1D, full data", ProblemKind::elliptic, 1, sine_1d(), CoefficientField::constant(10.0), {}, {}};
  if (id == "ex51ii")
    return {"elliptic 2D, full data", ProblemKind::elliptic, 2, sine_2d(), CoefficientField::constant(10.0), {}, {}};
  if (id == "ex52i")
    return {"parabolic 1D, terminal window", ProblemKind::parabolic, 1, sine_1d(), {}, linear_in_time(), parabola_x1()};
  if (id == "ex52ii")
    return {"parabolic 2D, terminal window", ProblemKind::parabolic, 2, sine_2d(), {}, linear_in_time(), parabola_x1()};
  if (id == "ex53")
    return {"elliptic 1D, partial data", ProblemKind::elliptic, 1, bump_1d(), CoefficientField::constant(10.0), {}, {}};
  throw ConfigError("unknown example '" + id + "'");
}

ProblemKind parse_kind(const std::string& s) {
  if (s == "elliptic") return ProblemKind::elliptic;
  if (s == "parabolic") return ProblemKind::parabolic;
  throw ConfigError("unknown problem kind '" + s + "'");
}

Mesh make_mesh(int dim, int cells) { return dim == 1 ? unit_interval_mesh(cells) : unit_square_mesh(cells); }

Mesh refine(Mesh mesh, int times) {
  for (int i = 0; i < times; ++i) mesh = refine_uniform(mesh);
  return mesh;
}

// Values of a nodal function and its element gradient at reference points.
struct PointState {
  double value;
  Point grad;
};

PointState at_entry(const Mesh& mesh, std::span<const double> u, std::size_t k, const QuadratureRule::Entry& e,
                    const std::vector<std::array<Point, 3>>& grads) {
  const auto& el = mesh.element(k);
  PointState s{0.0, {0.0, 0.0}};
  for (int a = 0; a < mesh.vertices_per_element(); ++a) {
    s.value += e.bary[a] * u[el[a]];
    for (int c = 0; c < mesh.dim(); ++c) s.grad[c] += u[el[a]] * grads[k][a][c];
  }
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  return out;
}

}  // namespace

Mesh ExampleSpec::inversion_mesh() const { return make_mesh(dim, cells); }

std::vector<int> ExampleSpec::layer_sizes() const {
  std::vector<int> s{dim};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(1);
  return s;
}

const NoiseSetting& ExampleSpec::setting(double noise) const {
  for (const auto& s : schedule)
    if (std::abs(s.noise - noise) <= 1e-12 * std::max(1.0, std::abs(noise))) return s;
  throw ConfigError(id + ": no regularization schedule entry for noise level " + fmt_short(noise));
}

InverseConfig ExampleSpec::inverse_config(double noise, bool hybrid) const {
  InverseConfig cfg;
  cfg.kind = kind;
  const auto& s = setting(noise);
  cfg.gamma = hybrid ? s.gamma_theta : s.gamma_h;
  cfg.bounds = bounds;
  cfg.omega = omega;
  cfg.T = T;
  cfg.T0 = T0;
  cfg.N = time_steps;
  cfg.learning_rate = learning_rate;
  cfg.max_iters = max_iters;
  cfg.baseline_step = baseline_step;
  cfg.baseline_max_iters = baseline_max_iters;
  return cfg;
}

PdeData ExampleSpec::pde_data() const { return {f, f_t, u0}; }

std::vector<std::string> example_ids() { return {"ex51i", "ex51ii", "ex52i", "ex52ii", "ex53"}; }

std::filesystem::path default_config_dir() {
  if (const char* env = std::getenv("COEFFREC_CONFIG_DIR"); env && *env) return env;
  return COEFFREC_CONFIG_DIR;
}

ExampleSpec load_example(const std::string& id, const std::filesystem::path& config_dir) {
  CatalogEntry entry = catalog(id);
  const ConfigFile cf = ConfigFile::load(config_dir / (id + ".ini"));
  ExampleSpec s;
  s.id = id;
  s.title = entry.title;
  s.kind = entry.kind;
  s.dim = entry.dim;
  s.q_true = entry.q_true;
  s.f = entry.f;
  s.f_t = entry.f_t;
  s.u0 = entry.u0;

  if (parse_kind(cf.get_string("problem.kind")) != s.kind || cf.get_int("problem.dim") != s.dim)
    throw ConfigError(cf.origin() + ": problem kind/dimension disagree with example '" + id + "'");
  s.cells = int(cf.get_int("discretization.cells"));
  s.data_refinement = int(cf.get_int("discretization.data_refinement"));
  if (s.cells < 1) throw ConfigError(cf.origin() + ": cells must be >= 1");
  if (s.data_refinement < 1)
    throw ConfigError(cf.origin() + ": data mesh must be strictly finer than the inversion mesh");
  if (s.kind == ProblemKind::parabolic) {
    s.T = cf.get_double("time.T");
    s.T0 = cf.get_double("time.T0");
    s.time_steps = int(cf.get_int("time.steps"));
    if (s.time_steps < 1) throw ConfigError(cf.origin() + ": time.steps must be >= 1");
  }
  const std::string omega = cf.get_string("observation.omega", "full");
  if (omega != "full") {
    const auto v = parse_doubles(omega, cf.origin() + ": observation.omega");
    if (v.size() != std::size_t(2 * s.dim)) throw ConfigError(cf.origin() + ": observation.omega needs 2*dim numbers");
    s.omega.full = false;
    for (int c = 0; c < s.dim; ++c) {
      s.omega.lo[c] = v[2 * c];
      s.omega.hi[c] = v[2 * c + 1];
      if (!(v[2 * c] < v[2 * c + 1])) throw ConfigError(cf.origin() + ": empty observation subdomain");
    }
  }
  s.bounds = {cf.get_double("coefficient.c0"), cf.get_double("coefficient.c1")};
  if (!(s.bounds.c0 > 0.0 && s.bounds.c0 < s.bounds.c1)) throw ConfigError(cf.origin() + ": need 0 < c0 < c1");
  s.hidden = cf.get_ints("network.hidden");
  s.learning_rate = cf.get_double("network.learning_rate");
  s.max_iters = int(cf.get_int("network.max_iters"));
  s.output_bias = cf.get_double("network.output_bias", 0.5 * (s.bounds.c0 + s.bounds.c1));
  s.baseline_init = cf.get_double("baseline.init", 0.5 * (s.bounds.c0 + s.bounds.c1));
  s.baseline_step = cf.get_double("baseline.step");
  s.baseline_max_iters = int(cf.get_int("baseline.max_iters"));
  for (const auto& key : cf.keys("schedule")) {
    const auto v = cf.get_doubles("schedule." + key);
    if (v.size() != 5) throw ConfigError(cf.origin() + ": schedule." + key + " needs noise, gammas and two references");
    s.schedule.push_back({v[0], v[1], v[2], v[3], v[4]});
  }
  if (s.schedule.empty()) throw ConfigError(cf.origin() + ": empty [schedule]");

  // the exact coefficient must be admissible
  const Mesh probe = refine(s.inversion_mesh(), 1);
  for (const auto& x : probe.nodes()) {
    const double q = s.q_true(x);
    if (q < s.bounds.c0 || q > s.bounds.c1)
      throw ConfigError(cf.origin() + ": exact coefficient leaves [c0, c1]");
  }
  return s;
}

ObservationSet synthesize_observations(const ExampleSpec& spec, const Mesh& mesh, double noise, std::uint64_t seed) {
  if (!(noise >= 0.0)) throw std::invalid_argument("synthesize_observations: noise must be >= 0");
  if (spec.data_refinement < 1) throw std::invalid_argument("synthesize_observations: data mesh must be finer");
  const Mesh fine = refine(mesh, spec.data_refinement);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const SparseMatrix m = assemble_mass(mesh);

  ObservationSet obs;
  obs.kind = spec.kind;
  obs.noise_rel = noise;
  obs.seed = seed;
  auto perturb = [&](std::vector<double>& z, double scale) {
    // draw first so the same seed yields the same xi at every noise level
    std::vector<double> diff(z.size());
    for (auto& d : diff) d = normal(rng);
    for (std::size_t i = 0; i < z.size(); ++i) {
      diff[i] *= noise * scale;
      z[i] += diff[i];
    }
    return mass_norm(m, diff);
  };

  if (spec.kind == ProblemKind::elliptic) {
    const FeFunction u = solve_elliptic({&fine, spec.q_true, spec.f, AssemblyMode::exact()});
    double umax = 0.0;
    for (double v : u.values()) umax = std::max(umax, std::abs(v));
    obs.z = transfer(u, mesh).values();
    obs.delta = perturb(obs.z, umax);
    return obs;
  }

  InverseConfig time_grid;
  time_grid.kind = ProblemKind::parabolic;
  time_grid.T = spec.T;
  time_grid.T0 = spec.T0;
  time_grid.N = spec.time_steps;
  const int n0 = time_grid.N0(), N = spec.time_steps;
  const auto states = solve_parabolic({&fine, spec.q_true, spec.f_t, spec.u0, spec.T, N, AssemblyMode::exact()});
  std::vector<std::vector<double>> snaps;
  snaps.reserve(states.size());
  double umax = 0.0;
  for (int n = std::max(n0 - 1, 0); n <= N; ++n)
    for (double v : states[n].values()) umax = std::max(umax, std::abs(v));
  for (const auto& s : states) snaps.push_back(transfer(s, mesh).values());
  obs.N0 = n0;
  obs.N = N;
  double d2 = 0.0;
  const double tau = spec.T / N;
  for (int n = n0; n <= N; ++n) {
    auto z = n == 0 ? snaps[0] : observation_average(snaps, n);
    const double d = perturb(z, umax);
    d2 += tau * d * d;
    obs.zn.push_back(std::move(z));
  }
  obs.delta = std::sqrt(d2);
  return obs;
}

double relative_error(const CoefficientField& candidate, const ExampleSpec& spec) {
  const Mesh eval = refine(spec.inversion_mesh(), spec.dim == 1 ? 3 : 1);
  const QuadratureRule rule = reference_rule(eval);
  std::vector<double> diff(rule.points.size()), ref(rule.points.size());
  for (std::size_t p = 0; p < rule.points.size(); ++p) {
    const double qt = spec.q_true(rule.points[p]);
    const double d = qt - candidate(rule.points[p]);
    diff[p] = d * d;
    ref[p] = qt * qt;
  }
  return std::sqrt(rule.integrate(diff) / rule.integrate(ref));
}

std::vector<double> triple_sum_weights(int N0, int N) {
  std::vector<double> w;
  for (int n = N0 + 1; n <= N; ++n) w.push_back(double(n - N0) * double(N - n + 1));
  return w;
}

double weighted_error_diagnostic(const CoefficientField& candidate, const ExampleSpec& spec) {
  const Mesh fine = refine(spec.inversion_mesh(), spec.data_refinement);
  const QuadratureRule rule = reference_rule(fine);
  const auto grads = barycentric_gradients(fine);
  std::vector<double> ratio2(rule.points.size()), qt(rule.points.size());
  for (std::size_t p = 0; p < rule.points.size(); ++p) {
    qt[p] = spec.q_true(rule.points[p]);
    const double r = (qt[p] - project_box(candidate(rule.points[p]), spec.bounds).value) / qt[p];
    ratio2[p] = r * r;
  }
  // integral of ratio^2 (q |grad u|^2 + g u) for a state u and source g
  using Source = std::function<double(std::size_t, const QuadratureRule::Entry&)>;
  auto functional = [&](std::span<const double> u, const Source& g) {
    double s = 0.0;
    for (std::size_t k = 0; k < rule.num_elements(); ++k)
      for (const auto& e : rule.element(k)) {
        const auto st = at_entry(fine, u, k, e, grads);
        const double g2 = st.grad[0] * st.grad[0] + st.grad[1] * st.grad[1];
        s += e.weight * ratio2[e.point] * (qt[e.point] * g2 + g(k, e) * st.value);
      }
    return s;
  };

  if (spec.kind == ProblemKind::elliptic) {
    const FeFunction u = solve_elliptic({&fine, spec.q_true, spec.f, AssemblyMode::exact()});
    return functional(u.values(), [&](std::size_t, const QuadratureRule::Entry& e) { return spec.f(rule.points[e.point]); });
  }
  const int N = spec.time_steps;
  const double tau = spec.T / N;
  InverseConfig grid;
  grid.kind = ProblemKind::parabolic;
  grid.T = spec.T;
  grid.T0 = spec.T0;
  grid.N = N;
  const int n0 = grid.N0();
  const auto states = solve_parabolic({&fine, spec.q_true, spec.f_t, spec.u0, spec.T, N, AssemblyMode::exact()});
  const auto w = triple_sum_weights(n0, N);
  double total = 0.0;
  for (int n = n0 + 1; n <= N; ++n) {
    // central difference quotient, one-sided at the final time
    const auto& next = states[std::min(n + 1, N)].values();
    const auto& prev = states[n - 1].values();
    const double dt = (n < N ? 2.0 : 1.0) * tau;
    const auto& cur = states[n].values();
    const double t = n * tau;
    auto g = [&](std::size_t k, const QuadratureRule::Entry& e) {
      const auto& el = fine.element(k);
      double ut = 0.0;
      for (int a = 0; a < fine.vertices_per_element(); ++a)
        ut += e.bary[a] * ((n < N ? next[el[a]] : cur[el[a]]) - prev[el[a]]) / dt;
      return spec.f_t(rule.points[e.point], t) - ut;
    };
    total += w[n - n0 - 1] * functional(cur, g);
  }
  return tau * tau * tau * total;
}

Instance make_instance(const ExampleSpec& spec_in, double noise, const std::string& method, const RunOptions& opts) {
  if (method != "hybrid" && method != "fem") throw ConfigError("unknown method '" + method + "'");
  const bool hybrid = method == "hybrid";
  Instance in;
  in.spec = spec_in;
  ExampleSpec& spec = in.spec;
  if (opts.cells) spec.cells = *opts.cells;
  if (opts.time_steps) spec.time_steps = *opts.time_steps;
  if (opts.hidden) spec.hidden = *opts.hidden;
  if (spec.cells < 1) throw ConfigError("cells must be >= 1");
  if (spec.kind == ProblemKind::parabolic && spec.time_steps < 1) throw ConfigError("time steps must be >= 1");

  bool scheduled = false;
  for (const auto& s : spec.schedule) scheduled = scheduled || std::abs(s.noise - noise) <= 1e-12;
  if (!scheduled) {
    if (!opts.gamma) throw ConfigError(spec.id + ": noise level " + fmt_short(noise) + " needs an explicit gamma");
    spec.schedule.push_back({noise, *opts.gamma, *opts.gamma, 0.0, 0.0});
  }
  InverseConfig cfg = spec.inverse_config(noise, hybrid);
  if (opts.gamma) cfg.gamma = *opts.gamma;
  if (opts.learning_rate) cfg.learning_rate = *opts.learning_rate;
  if (opts.max_iters) (hybrid ? cfg.max_iters : cfg.baseline_max_iters) = *opts.max_iters;
  cfg.gradient_mode = opts.gradient_mode;
  cfg.mode = opts.mode;
  cfg.seed = opts.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  in.config = cfg;
  in.mesh = std::make_unique<Mesh>(spec.inversion_mesh());
  ObservationSet obs = synthesize_observations(spec, *in.mesh, noise, opts.seed);
  in.model = std::make_unique<StateModel>(*in.mesh, spec.pde_data(), cfg, std::move(obs));
  return in;
}

namespace {

template <class Loss>
GradientCheckReport directional_check(std::span<const double> x, std::span<const double> grad, const Loss& loss,
                                      int directions, std::uint64_t seed, double corrupt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  GradientCheckReport rep;
  const double h = 1e-6;
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end()), d(x.size());
  for (int r = 0; r < directions; ++r) {
    for (auto& v : d) v = unif(rng);
    double gd = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + h * d[i];
      xm[i] = x[i] - h * d[i];
      gd += corrupt * grad[i] * d[i];
    }
    const double fd = (loss(xp) - loss(xm)) / (2 * h);
    const double scale = std::max({std::abs(gd), std::abs(fd), 1e-300});
    rep.discrepancies.push_back(std::abs(gd - fd) / scale);
    rep.max_discrepancy = std::max(rep.max_discrepancy, rep.discrepancies.back());
  }
  return rep;
}

}  // namespace

GradientCheckReport check_hybrid_gradient(const StateModel& model, const MlpParams& params, int directions,
                                          std::uint64_t seed, double corrupt) {
  const HybridObjective obj(model);
  const auto ev = obj.evaluate(params, true, GradientMode::discrete_adjoint);
  auto loss = [&](std::span<const double> flat) {
    const MlpParams p(params.layer_sizes(), std::vector<double>(flat.begin(), flat.end()));
    return obj.evaluate(p, false).loss;
  };
  return directional_check(params.flat(), ev.gradient, loss, directions, seed, corrupt);
}

GradientCheckReport check_fem_gradient(const StateModel& model, std::span<const double> nodal_q, int directions,
                                       std::uint64_t seed, double corrupt) {
  const FemObjective obj(model);
  const auto ev = obj.evaluate(nodal_q, true);
  auto loss = [&](std::span<const double> q) { return obj.evaluate(q, false).loss; };
  return directional_check(nodal_q, ev.gradient, loss, directions, seed, corrupt);
}

CellResult run_cell(const ExampleSpec& spec_in, double noise, const std::string& method, const RunOptions& opts) {
  const Instance in = make_instance(spec_in, noise, method, opts);
  const ExampleSpec& spec = in.spec;
  const InverseConfig& cfg = in.config;
  const Mesh& mesh = *in.mesh;
  const StateModel& model = *in.model;
  const bool hybrid = method == "hybrid";

  CellResult cell;
  cell.example = spec.id;
  cell.noise = noise;
  cell.method = method;
  const auto& setting = spec.setting(noise);
  cell.reference = hybrid ? setting.reference_hybrid : setting.reference_fem;
  cell.gamma = cfg.gamma;
  cell.delta = model.observations().delta;
  const ErrorProbe probe = [&spec](const CoefficientField& q) { return relative_error(q, spec); };

  try {
    if (hybrid) {
      cell.result = train(model, glorot_init(spec.layer_sizes(), opts.seed, spec.output_bias), probe,
                          &cell.result);
      cell.error = relative_error(projected_network(*cell.result.params, cfg.bounds), spec);
    } else {
      std::vector<double> init(mesh.num_nodes(), spec.baseline_init);
      cell.result = train_baseline_fem(model, std::move(init), probe);
      cell.error = relative_error(FeFunction(mesh, *cell.result.nodal_q).as_field(), spec);
    }
    cell.status = "ok";
  } catch (const Divergence&) {
    cell.ok = false;
    cell.status = "diverged";
    cell.error = std::nan("");
  } catch (const SolverFailure&) {
    cell.ok = false;
    cell.status = "solver-failure";
    cell.error = std::nan("");
  }
  cell.iterations = cell.result.iterations;
  cell.runtime_ms = cell.result.total_ms;
  return cell;
}

std::vector<CellResult> run_table1(const std::vector<ExampleSpec>& examples, const std::vector<double>& noise_levels,
                                   const std::vector<std::string>& methods, const RunOptions& opts, int jobs) {
  struct Task {
    const ExampleSpec* spec;
    double noise;
    std::string method;
  };
  std::vector<Task> tasks;
  for (const auto& e : examples)
    for (double eps : noise_levels)
      for (const auto& m : methods) tasks.push_back({&e, eps, m});

  std::vector<CellResult> out(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      try {
        out[i] = run_cell(*t.spec, t.noise, t.method, opts);
      } catch (const std::exception& e) {
        out[i].example = t.spec->id;
        out[i].noise = t.noise;
        out[i].method = t.method;
        out[i].ok = false;
        out[i].status = std::string("failed: ") + e.what();
        out[i].error = std::nan("");
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, int(tasks.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

void write_table_csv(const std::vector<CellResult>& cells, const std::filesystem::path& file, bool with_timing) {
  auto out = open_out(file);
  out << "example,noise,method,gamma,relative_error,reference,ratio,delta,iterations,status"
      << (with_timing ? ",runtime_ms" : "") << '\n';
  for (const auto& c : cells) {
    out << c.example << ',' << fmt(c.noise) << ',' << c.method << ',' << fmt(c.gamma) << ',' << fmt(c.error) << ','
        << fmt(c.reference) << ',' << fmt(c.reference > 0 ? c.error / c.reference : std::nan("")) << ','
        << fmt(c.delta) << ',' << c.iterations << ',' << c.status;
    if (with_timing) out << ',' << fmt(c.runtime_ms);
    out << '\n';
  }
}

void write_table_markdown(const std::vector<CellResult>& cells, const std::filesystem::path& file) {
  auto out = open_out(file);
  out << "# Relative errors of the reconstructions\n\n"
      << "Measured values next to the published reference values.\n";
  std::vector<std::string> order;
  for (const auto& c : cells)
    if (std::find(order.begin(), order.end(), c.example) == order.end()) order.push_back(c.example);
  for (const auto& ex : order) {
    out << "\n## " << ex << "\n\n"
        << "| noise | gamma (hybrid) | e hybrid | reference | gamma (FEM) | e FEM | reference |\n"
        << "|---|---|---|---|---|---|---|\n";
    std::vector<double> levels;
    for (const auto& c : cells)
      if (c.example == ex && std::find(levels.begin(), levels.end(), c.noise) == levels.end())
        levels.push_back(c.noise);
    for (double eps : levels) {
      const CellResult* h = nullptr;
      const CellResult* f = nullptr;
      for (const auto& c : cells)
        if (c.example == ex && c.noise == eps) (c.method == "hybrid" ? h : f) = &c;
      auto cols = [&](const CellResult* c) {
        if (!c) return std::string("| - | - | - ");
        const std::string e = c->ok ? fmt_short(c->error) : c->status;
        return "| " + fmt_short(c->gamma) + " | " + e + " | " + fmt_short(c->reference) + " ";
      };
      out << "| " << fmt_short(eps) << ' ' << cols(h) << cols(f) << "|\n";
    }
  }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired samples");
  double mx = 0, my = 0;
  const double n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

double l2_error(const Mesh& mesh, std::span<const double> u, const std::function<double(const Point&)>& exact) {
  const QuadratureRule rule = reference_rule(mesh);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.num_elements(); ++k) {
    const auto& el = mesh.element(k);
    for (const auto& e : rule.element(k)) {
      double uh = 0.0;
      for (int a = 0; a < mesh.vertices_per_element(); ++a) uh += e.bary[a] * u[el[a]];
      const double d = uh - exact(rule.points[e.point]);
      s += e.weight * d * d;
    }
  }
  return std::sqrt(s);
}

void add_series(StudyResult& st, const std::string& name, const std::vector<double>& p, const std::vector<double>& e,
                bool fit = true) {
  for (std::size_t i = 0; i < p.size(); ++i) st.rows.push_back({name, p[i], e[i]});
  if (fit) st.slopes[name] = loglog_slope(p, e);
}

StudyResult fem_h_study() {
  StudyResult st;
  st.kind = "fem-h";
  const std::vector<int> ms{8, 16, 32};
  std::vector<double> hs, e1, e2, ep;
  const auto one = CoefficientField::constant(1.0);
  for (int m : ms) {
    hs.push_back(1.0 / m);
    {
      const Mesh mesh = unit_interval_mesh(m);
      const CoefficientField f{[](const Point& x) { return pi * pi * std::sin(pi * x[0]); }, {}};
      const auto u = solve_elliptic({&mesh, one, f, AssemblyMode::exact()});
      e1.push_back(l2_error(mesh, u.values(), [](const Point& x) { return std::sin(pi * x[0]); }));
    }
    {
      const Mesh mesh = unit_square_mesh(m);
      const CoefficientField f{
          [](const Point& x) { return 2 * pi * pi * std::sin(pi * x[0]) * std::sin(pi * x[1]); }, {}};
      const auto u = solve_elliptic({&mesh, one, f, AssemblyMode::exact()});
      e2.push_back(l2_error(mesh, u.values(), [](const Point& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); }));
    }
    {
      // backward Euler applied to an eigenfunction: exact time-discrete oracle
      const Mesh mesh = unit_interval_mesh(m);
      const double T = 0.1;
      const int N = 10;
      const CoefficientField u0{[](const Point& x) { return std::sin(pi * x[0]); }, {}};
      const auto states = solve_parabolic({&mesh, one, [](const Point&, double) { return 0.0; }, u0, T, N,
                                           AssemblyMode::exact()});
      const double amp = std::pow(1.0 + (T / N) * pi * pi, -N);
      ep.push_back(l2_error(mesh, states.back().values(), [amp](const Point& x) { return amp * std::sin(pi * x[0]); }));
    }
  }
  add_series(st, "elliptic-1d", hs, e1);
  add_series(st, "elliptic-2d", hs, e2);
  add_series(st, "parabolic-h", hs, ep);
  return st;
}

StudyResult fem_tau_study() {
  StudyResult st;
  st.kind = "fem-tau";
  const Mesh mesh = unit_interval_mesh(512);
  const double T = 0.1;
  const CoefficientField u0{[](const Point& x) { return std::sin(pi * x[0]); }, {}};
  std::vector<double> taus, errs;
  for (int N : {5, 10, 20, 40}) {
    const auto states = solve_parabolic({&mesh, CoefficientField::constant(1.0),
                                         [](const Point&, double) { return 0.0; }, u0, T, N, AssemblyMode::exact()});
    const double amp = std::exp(-pi * pi * T);
    taus.push_back(T / N);
    errs.push_back(l2_error(mesh, states.back().values(), [amp](const Point& x) { return amp * std::sin(pi * x[0]); }));
  }
  add_series(st, "parabolic-tau", taus, errs);
  return st;
}

}  // namespace

StudyResult run_convergence_study(const std::string& kind, const std::filesystem::path& config_dir,
                                  const std::string& example_id, const RunOptions& opts) {
  if (kind == "fem-h") return fem_h_study();
  if (kind == "fem-tau") return fem_tau_study();
  if (kind != "quad-n" && kind != "noise-delta") throw ConfigError("unknown study '" + kind + "'");

  const ExampleSpec spec = load_example(example_id, config_dir);
  StudyResult st;
  st.kind = kind;
  if (kind == "quad-n") {
    std::vector<double> ns, errs;
    for (int n = 0; n <= 5; ++n) {
      RunOptions o = opts;
      o.mode = AssemblyMode::quadrature(n);
      const auto cell = run_cell(spec, 0.01, "hybrid", o);
      if (!cell.ok) throw SolverFailure("quad-n study: level " + std::to_string(n) + " " + cell.status);
      ns.push_back(n);
      errs.push_back(cell.error);
    }
    add_series(st, "hybrid", ns, errs, false);
    double lo = errs[0], hi = errs[0];
    for (double e : errs) lo = std::min(lo, e), hi = std::max(hi, e);
    st.slopes["relative_variation"] = (hi - lo) / errs[0];
    return st;
  }
  std::vector<double> deltas, errs;
  for (double eps : {1e-1, 5e-2, 1e-2}) {
    const auto cell = run_cell(spec, eps, "hybrid", opts);
    if (!cell.ok) throw SolverFailure("noise-delta study: noise " + fmt_short(eps) + " " + cell.status);
    deltas.push_back(cell.delta);
    errs.push_back(cell.error);
  }
  add_series(st, "hybrid", deltas, errs);
  return st;
}

void write_study_csv(const StudyResult& study, const std::filesystem::path& file) {
  auto out = open_out(file);
  out << "series,parameter,error\n";
  for (const auto& r : study.rows) out << r.series << ',' << fmt(r.parameter) << ',' << fmt(r.error) << '\n';
  auto slopes_file = file;
  slopes_file.replace_filename(file.stem().string() + "_slopes.csv");
  auto so = open_out(slopes_file);
  so << "series,value\n";
  for (const auto& [k, v] : study.slopes) so << k << ',' << fmt(v) << '\n';
}

}  // namespace coeffrec
