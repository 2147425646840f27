// coeffrec command-line front end.
//
// Exit codes: 0 success, 1 check failure, 2 configuration error,
// 3 numerical failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coeffrec/config.hpp"
#include "coeffrec/errors.hpp"
#include "coeffrec/forward.hpp"
#include "coeffrec/harness.hpp"

namespace fs = std::filesystem;
using namespace coeffrec;

namespace {

enum Exit { ok = 0, check_failed = 1, config_error = 2, numerical_failure = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool quiet = false;
  int jobs = 1;
  std::string gradient_mode;
  bool timing = false;
  std::string config_dir;
};

// Seed precedence: --seed, then the config file, then COEFFREC_SEED, then 1.
std::uint64_t resolve_seed(const Globals& g, const ConfigFile* cf) {
  if (g.seed) return *g.seed;
  if (cf && cf->has("run.seed")) return std::uint64_t(cf->get_int("run.seed"));
  if (const char* env = std::getenv("COEFFREC_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("COEFFREC_SEED is not an unsigned integer: ") + env);
    }
  }
  return 1;
}

GradientMode parse_gradient_mode(const std::string& s) {
  if (s == "adjoint" || s == "discrete-adjoint") return GradientMode::discrete_adjoint;
  if (s == "riesz") return GradientMode::riesz;
  throw ConfigError("unknown gradient mode '" + s + "' (expected adjoint or riesz)");
}

AssemblyMode parse_assembly(const ConfigFile& cf, const std::string& key) {
  const std::string v = cf.get_string(key, "0");
  if (v == "exact") return AssemblyMode::exact();
  const long n = cf.get_int(key, 0);
  if (n < 0 || n > 8) throw ConfigError(key + ": quadrature level must be in 0..8 or 'exact'");
  return AssemblyMode::quadrature(int(n));
}

fs::path config_dir(const Globals& g) { return g.config_dir.empty() ? default_config_dir() : fs::path(g.config_dir); }

// [run] section -> example, method, noise and overrides.
struct RunConfig {
  ExampleSpec spec;
  std::string method;
  double noise = 0.0;
  RunOptions opts;
};

RunConfig read_run_config(const fs::path& file, const Globals& g) {
  const ConfigFile cf = ConfigFile::load(file);
  RunConfig rc;
  rc.spec = load_example(cf.get_string("run.example"), config_dir(g));
  rc.method = cf.get_string("run.method", "hybrid");
  if (rc.method == "fem-baseline") rc.method = "fem";
  if (rc.method != "hybrid" && rc.method != "fem") throw ConfigError("run.method must be hybrid or fem-baseline");
  rc.noise = cf.get_double("run.noise");
  if (rc.noise < 0) throw ConfigError("run.noise must be >= 0");
  rc.opts.seed = resolve_seed(g, &cf);
  rc.opts.gradient_mode = parse_gradient_mode(g.gradient_mode.empty() ? cf.get_string("run.gradient_mode", "adjoint")
                                                                      : g.gradient_mode);
  rc.opts.mode = parse_assembly(cf, "run.quadrature_level");
  if (cf.has("run.max_iters")) rc.opts.max_iters = int(cf.get_int("run.max_iters"));
  if (cf.has("run.gamma")) {
    rc.opts.gamma = cf.get_double("run.gamma");
    if (*rc.opts.gamma < 0) throw ConfigError("run.gamma must be >= 0");
  }
  if (cf.has("run.learning_rate")) rc.opts.learning_rate = cf.get_double("run.learning_rate");
  if (cf.has("run.cells")) rc.opts.cells = int(cf.get_int("run.cells"));
  if (cf.has("run.time_steps")) rc.opts.time_steps = int(cf.get_int("run.time_steps"));
  if (cf.has("run.hidden")) rc.opts.hidden = cf.get_ints("run.hidden");
  if (rc.opts.max_iters && *rc.opts.max_iters < 0) throw ConfigError("run.max_iters must be >= 0");
  // keep rc.spec in step with the overrides so exports and diagnostics see
  // the same discretization as the training run
  if (rc.opts.cells) rc.spec.cells = *rc.opts.cells;
  if (rc.opts.time_steps) rc.spec.time_steps = *rc.opts.time_steps;
  if (rc.opts.hidden) rc.spec.hidden = *rc.opts.hidden;
  return rc;
}

void say(const Globals& g, const std::string& s) {
  if (!g.quiet) std::cout << s << '\n';
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

int cmd_solve_forward(const fs::path& file, const Globals& g) {
  const ConfigFile cf = ConfigFile::load(file);
  ExampleSpec spec = load_example(cf.get_string("forward.example"), config_dir(g));
  spec.cells = int(cf.get_int("forward.cells", spec.cells));
  spec.time_steps = int(cf.get_int("forward.time_steps", spec.time_steps));
  if (spec.cells < 1) throw ConfigError("forward.cells must be >= 1");
  if (spec.kind == ProblemKind::parabolic && spec.time_steps < 1) throw ConfigError("forward.time_steps must be >= 1");
  const AssemblyMode mode = parse_assembly(cf, "forward.quadrature_level");
  const Mesh mesh = spec.inversion_mesh();
  const fs::path out(g.out);
  write_mesh_csv(mesh, out);
  if (spec.kind == ProblemKind::elliptic) {
    const auto u = solve_elliptic({&mesh, spec.q_true, spec.f, mode});
    write_fe_csv(u, out / "state.csv");
  } else {
    const auto states = solve_parabolic({&mesh, spec.q_true, spec.f_t, spec.u0, spec.T, spec.time_steps, mode});
    write_state_series_csv(states, out / "state.csv");
  }
  say(g, "wrote " + (out / "state.csv").string());
  return ok;
}

void write_metrics(const fs::path& file, const CellResult& c, double weighted, bool timing) {
  std::ofstream m(file);
  if (!m) throw std::runtime_error("cannot open " + file.string());
  m << "example,method,noise,gamma,relative_error,delta,weighted_error,iterations,status"
    << (timing ? ",runtime_ms" : "") << '\n';
  m << c.example << ',' << c.method << ',' << sci(c.noise) << ',' << sci(c.gamma) << ',' << sci(c.error) << ','
    << sci(c.delta) << ',' << sci(weighted) << ',' << c.iterations << ',' << c.status;
  if (timing) m << ',' << sci(c.runtime_ms);
  m << '\n';
}

int cmd_reconstruct(const fs::path& file, const Globals& g) {
  const RunConfig rc = read_run_config(file, g);
  const fs::path out(g.out);
  fs::create_directories(out);
  const CellResult c = run_cell(rc.spec, rc.noise, rc.method, rc.opts);
  write_training_log(c.result, out / "training_log.csv", g.timing);
  double weighted = std::nan("");
  if (c.result.params) {
    save_checkpoint(*c.result.params, out / "checkpoint.txt");
    weighted = weighted_error_diagnostic(projected_network(*c.result.params, rc.spec.bounds), rc.spec);
  }
  if (c.result.nodal_q) {
    const Mesh mesh = rc.spec.inversion_mesh();
    const FeFunction q(mesh, *c.result.nodal_q);
    write_fe_csv(q, out / "coefficient.csv");
    weighted = weighted_error_diagnostic(q.as_field(), rc.spec);
  }
  write_metrics(out / "metrics.csv", c, weighted, g.timing);
  if (!c.ok) {
    std::cerr << "reconstruct: " << c.status << " (" << c.result.message << ")\n";
    return numerical_failure;
  }
  say(g, rc.spec.id + " " + rc.method + " noise=" + sci(rc.noise) + " relative_error=" + sci(c.error) +
             " iterations=" + std::to_string(c.iterations));
  return ok;
}

int cmd_gradcheck(const fs::path& file, const Globals& g, int directions, double corrupt) {
  RunConfig rc = read_run_config(file, g);
  rc.opts.gradient_mode = GradientMode::discrete_adjoint;
  const Instance in = make_instance(rc.spec, rc.noise, rc.method, rc.opts);
  GradientCheckReport rep;
  if (rc.method == "hybrid") {
    const MlpParams p = glorot_init(in.spec.layer_sizes(), rc.opts.seed, in.spec.output_bias);
    rep = check_hybrid_gradient(*in.model, p, directions, rc.opts.seed, corrupt);
  } else {
    // a non-constant interior point so both the penalty and the fit contribute
    const Mesh& mesh = *in.mesh;
    std::vector<double> q(mesh.num_nodes());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = in.spec.q_true(mesh.node(i)) + 0.1 * std::sin(7.0 * double(i));
    rep = check_fem_gradient(*in.model, q, directions, rc.opts.seed, corrupt);
  }
  const bool pass = rep.max_discrepancy <= 1e-4;
  std::cout << "max relative discrepancy " << sci(rep.max_discrepancy) << " over " << rep.discrepancies.size()
            << " directions: " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? ok : check_failed;
}

std::vector<double> default_noise_levels() { return {1e-1, 5e-2, 1e-2, 5e-3, 1e-3}; }

int cmd_reproduce_table1(const Globals& g, std::vector<std::string> examples, std::vector<double> noise,
                         std::optional<int> max_iters) {
  if (examples.empty()) examples = example_ids();
  if (noise.empty()) noise = default_noise_levels();
  std::vector<ExampleSpec> specs;
  for (const auto& id : examples) specs.push_back(load_example(id, config_dir(g)));
  RunOptions opts;
  opts.seed = resolve_seed(g, nullptr);
  if (!g.gradient_mode.empty()) opts.gradient_mode = parse_gradient_mode(g.gradient_mode);
  opts.max_iters = max_iters;
  const auto cells = run_table1(specs, noise, {"hybrid", "fem"}, opts, g.jobs);
  const fs::path out(g.out);
  write_table_csv(cells, out / "table1.csv", g.timing);
  write_table_markdown(cells, out / "table1.md");
  int failed = 0;
  for (const auto& c : cells) failed += c.ok ? 0 : 1;
  say(g, "wrote " + std::to_string(cells.size()) + " cells to " + (out / "table1.csv").string() +
             (failed ? " (" + std::to_string(failed) + " flagged)" : ""));
  return ok;
}

int cmd_study(const Globals& g, const std::string& kind, const std::string& example, std::optional<int> max_iters) {
  RunOptions opts;
  opts.seed = resolve_seed(g, nullptr);
  if (!g.gradient_mode.empty()) opts.gradient_mode = parse_gradient_mode(g.gradient_mode);
  opts.max_iters = max_iters;
  const auto st = run_convergence_study(kind, config_dir(g), example, opts);
  const fs::path file = fs::path(g.out) / (kind + ".csv");
  write_study_csv(st, file);
  for (const auto& [series, value] : st.slopes) say(g, kind + " " + series + ": " + sci(value));
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion coefficient identification with hybrid neural network / finite element schemes"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (fallback: config, then COEFFREC_SEED)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_option("--jobs", g.jobs, "Worker threads for table runs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--gradient-mode", g.gradient_mode, "adjoint or riesz");
  app.add_flag("--timing", g.timing, "Add wall-clock columns to CSV output (breaks byte-identical reruns)");
  app.add_option("--config-dir", g.config_dir, "Directory of example configs");

  std::string file;
  auto* fwd = app.add_subcommand("solve-forward", "Solve the forward problem of an example");
  fwd->add_option("config", file, "Config file with a [forward] section")->required();

  auto* rec = app.add_subcommand("reconstruct", "Synthesize data, train, report metrics");
  rec->add_option("config", file, "Config file with a [run] section")->required();

  int directions = 8;
  double corrupt = 1.0;
  auto* gc = app.add_subcommand("gradcheck", "Compare adjoint gradients with finite differences");
  gc->add_option("config", file, "Config file with a [run] section")->required();
  gc->add_option("--directions", directions, "Random directions")->check(CLI::PositiveNumber);
  gc->add_option("--corrupt-gradient", corrupt, "Scale the adjoint gradient (test hook)");

  std::vector<std::string> examples;
  std::vector<double> noise;
  std::optional<int> max_iters;
  auto* tab = app.add_subcommand("reproduce-table1", "Run all examples, noise levels and both methods");
  tab->add_option("--examples", examples, "Comma-separated subset of example ids")
      ->delimiter(',')
      ->allow_extra_args(false);
  tab->add_option("--noise", noise, "Comma-separated subset of noise levels")->delimiter(',')->allow_extra_args(false);
  tab->add_option("--max-iters", max_iters, "Override iteration budgets");
  tab->add_option("out", g.out, "Output directory");

  std::string kind, example = "ex51i";
  auto* st = app.add_subcommand("study", "Convergence and sensitivity studies");
  st->add_option("kind", kind, "fem-h | fem-tau | quad-n | noise-delta")
      ->required()
      ->check(CLI::IsMember({"fem-h", "fem-tau", "quad-n", "noise-delta"}));
  st->add_option("--example", example, "Example for quad-n and noise-delta")->capture_default_str();
  st->add_option("--max-iters", max_iters, "Override the iteration budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_error;
  }

  try {
    if (fwd->parsed()) return cmd_solve_forward(file, g);
    if (rec->parsed()) return cmd_reconstruct(file, g);
    if (gc->parsed()) return cmd_gradcheck(file, g, directions, corrupt);
    if (tab->parsed()) return cmd_reproduce_table1(g, examples, noise, max_iters);
    if (st->parsed()) return cmd_study(g, kind, example, max_iters);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return config_error;
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return numerical_failure;
  } catch (const Divergence& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return numerical_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numerical_failure;
  }
  return ok;
}
