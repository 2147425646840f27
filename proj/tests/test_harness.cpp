#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "coeffrec/config.hpp"
#include "coeffrec/harness.hpp"
#include "doctest.h"

using namespace coeffrec;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes a copy of a shipped config with one substring replaced and loads it.
ExampleSpec load_modified(const std::string& id, const std::string& from, const std::string& to) {
  std::string text = read_file(default_config_dir() / (id + ".ini"));
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
  const fs::path dir = fs::temp_directory_path() / "coeffrec_harness_cfg";
  fs::create_directories(dir);
  std::ofstream(dir / (id + ".ini")) << text;
  return load_example(id, dir);
}

}  // namespace

TEST_CASE("all catalog examples load from the shipped configs") {
  const auto ids = example_ids();
  CHECK(ids.size() == 5);
  for (const auto& id : ids) {
    const auto spec = load_example(id, default_config_dir());
    CHECK(spec.id == id);
    CHECK(spec.schedule.size() == 5);
    CHECK(spec.bounds.c0 < spec.bounds.c1);
    CHECK(spec.layer_sizes().front() == spec.dim);
    CHECK(spec.layer_sizes().back() == 1);
  }
  CHECK_THROWS_AS(load_example("ex99", default_config_dir()), ConfigError);
}

TEST_CASE("relative error oracles") {
  const auto spec = load_example("ex51i", default_config_dir());
  // q_true = 2 + sin(2 pi x): ||sin|| / ||2 + sin|| = sqrt(1/2) / sqrt(9/2) = 1/3
  CHECK(relative_error(CoefficientField::constant(2.0), spec) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(relative_error(spec.q_true, spec) == 0.0);
  const CoefficientField scaled{[&](const Point& x) { return 1.1 * spec.q_true(x); }, {}};
  CHECK(relative_error(scaled, spec) == doctest::Approx(0.1).epsilon(1e-10));

  const auto spec2 = load_example("ex51ii", default_config_dir());
  CHECK(relative_error(spec2.q_true, spec2) == 0.0);
  CHECK(relative_error(CoefficientField::constant(2.0), spec2) > 0.0);
}

TEST_CASE("synthetic data: determinism and noise scaling") {
  const auto spec = load_example("ex51i", default_config_dir());
  const Mesh mesh = spec.inversion_mesh();
  const auto a = synthesize_observations(spec, mesh, 0.01, 42);
  const auto b = synthesize_observations(spec, mesh, 0.01, 42);
  const auto c = synthesize_observations(spec, mesh, 0.02, 42);
  const auto d = synthesize_observations(spec, mesh, 0.01, 43);
  const auto clean = synthesize_observations(spec, mesh, 0.0, 42);
  CHECK(a.z == b.z);
  CHECK(a.z != d.z);
  CHECK(clean.delta == 0.0);
  CHECK(c.delta / a.delta == doctest::Approx(2.0).epsilon(0.2));
  // same draws at every level: the perturbation doubles exactly
  for (std::size_t i = 0; i < a.z.size(); ++i)
    CHECK(c.z[i] - clean.z[i] == doctest::Approx(2.0 * (a.z[i] - clean.z[i])).epsilon(1e-9).scale(1e-12));
  // clean data are the fine-mesh solution restricted to the coarse nodes
  const Mesh fine_mesh = unit_interval_mesh(2 * spec.cells);
  const auto fine = solve_elliptic({&fine_mesh, spec.q_true, spec.f});
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) CHECK(clean.z[i] == doctest::Approx(fine[2 * i]).epsilon(1e-9));
  CHECK_THROWS_AS(synthesize_observations(spec, mesh, -0.1, 1), std::invalid_argument);
}

TEST_CASE("parabolic data cover the observation window with trapezoid averages") {
  auto spec = load_example("ex52i", default_config_dir());
  spec.time_steps = 100;
  const Mesh mesh = spec.inversion_mesh();
  const auto obs = synthesize_observations(spec, mesh, 0.0, 1);
  CHECK(obs.N0 == 90);
  CHECK(obs.N == 100);
  CHECK(obs.zn.size() == 11);
  const Mesh fine = refine_uniform(mesh);
  const auto states = solve_parabolic({&fine, spec.q_true, spec.f_t, spec.u0, spec.T, 100});
  const std::size_t mid = mesh.num_nodes() / 2;
  CHECK(obs.at_step(95)[mid] == doctest::Approx(0.5 * (states[94][2 * mid] + states[95][2 * mid])).epsilon(1e-9));
  const auto noisy = synthesize_observations(spec, mesh, 0.01, 1);
  const auto noisy2 = synthesize_observations(spec, mesh, 0.02, 1);
  CHECK(noisy.delta > 0.0);
  CHECK(noisy2.delta / noisy.delta == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("triple-sum weights match brute-force pair counting") {
  for (auto [n0, N] : {std::pair{0, 1}, std::pair{3, 9}, std::pair{90, 100}}) {
    const auto w = triple_sum_weights(n0, N);
    REQUIRE(w.size() == std::size_t(N - n0));
    for (int n = n0 + 1; n <= N; ++n) {
      int count = 0;
      for (int i = n0 + 1; i <= N; ++i)
        for (int j = i; j <= N; ++j)
          if (i <= n && n <= j) ++count;
      CHECK(w[std::size_t(n - n0 - 1)] == double(count));
    }
  }
}

TEST_CASE("weighted diagnostic vanishes at the truth and is positive elsewhere") {
  auto spec = load_example("ex51i", default_config_dir());
  CHECK(weighted_error_diagnostic(spec.q_true, spec) == doctest::Approx(0.0).scale(1e-14));
  const double off = weighted_error_diagnostic(CoefficientField::constant(2.0), spec);
  CHECK(off > 0.0);
  const CoefficientField closer{[&](const Point& x) { return 0.5 * (spec.q_true(x) + 2.0); }, {}};
  // the integrand is quadratic in (q_true - q): halving the error quarters it
  CHECK(weighted_error_diagnostic(closer, spec) == doctest::Approx(0.25 * off).epsilon(1e-9));

  auto par = load_example("ex52i", default_config_dir());
  par.time_steps = 100;
  CHECK(weighted_error_diagnostic(par.q_true, par) == doctest::Approx(0.0).scale(1e-14));
  CHECK(weighted_error_diagnostic(CoefficientField::constant(2.0), par) > 0.0);
}

TEST_CASE("config errors are reported as ConfigError") {
  CHECK_THROWS_AS(load_modified("ex51i", "kind = elliptic", "kind = parabolic"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "data_refinement = 1", "data_refinement = 0"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "c1 = 4.0", "c1 = 2.5"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "c0 = 0.5", "c0 = abc"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "[problem]", "[problem\n"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "dim = 1", "dim = 1\ndim = 1"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "cells = 40", "cells = 4.5"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex52i", "steps = 1000", "steps = 0"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "omega = full", "omega = 0.5"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex51i", "omega = full", "omega = 0.7, 0.3"), ConfigError);
  CHECK_THROWS_AS(load_modified("ex53", "noise_1 = 1e-1,", "noise_1 = 1e-1, 2,"), ConfigError);
  CHECK_NOTHROW(load_modified("ex51i", "omega = full", "omega = 0.25, 0.75"));
}

TEST_CASE("config file parsing") {
  const auto cf = ConfigFile::parse("; comment\n[a]\nx = 1.5\nn = 3\nlist = 1, 2,3\ns = word\n", "inline");
  CHECK(cf.get_double("a.x") == 1.5);
  CHECK(cf.get_int("a.n") == 3);
  CHECK(cf.get_ints("a.list") == std::vector<int>{1, 2, 3});
  CHECK(cf.get_string("a.s") == "word");
  CHECK(cf.get_double("a.missing", 7.0) == 7.0);
  CHECK(cf.keys("a") == std::vector<std::string>{"x", "n", "list", "s"});
  CHECK_THROWS_AS(cf.get_string("a.missing"), ConfigError);
  CHECK_THROWS_AS(cf.get_int("a.x"), ConfigError);
  CHECK_THROWS_AS(cf.get_double("a.s"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::load("/nonexistent/coeffrec.ini"), ConfigError);
  CHECK(parse_doubles("1e-3, 2", "x") == std::vector<double>{1e-3, 2.0});
}

TEST_CASE("instances: overrides and unscheduled noise levels") {
  const auto spec = load_example("ex51i", default_config_dir());
  RunOptions opts;
  opts.cells = 12;
  opts.max_iters = 5;
  auto inst = make_instance(spec, 0.01, "hybrid", opts);
  CHECK(inst.mesh->cells_per_side() == 12);
  CHECK(inst.config.gamma == spec.setting(0.01).gamma_theta);
  CHECK(inst.config.max_iters == 5);
  CHECK(make_instance(spec, 0.01, "fem", opts).config.gamma == spec.setting(0.01).gamma_h);
  CHECK_THROWS_AS(make_instance(spec, 0.2, "hybrid", opts), ConfigError);
  opts.gamma = 1e-4;
  CHECK(make_instance(spec, 0.2, "hybrid", opts).config.gamma == 1e-4);
  opts.gamma = -1.0;
  CHECK_THROWS_AS(make_instance(spec, 0.01, "hybrid", opts), ConfigError);
}

TEST_CASE("gradient check report detects a corrupted gradient") {
  const auto spec = load_example("ex51ii", default_config_dir());
  RunOptions opts;
  opts.cells = 6;
  opts.hidden = std::vector<int>{8, 8};
  const auto inst = make_instance(spec, 0.01, "hybrid", opts);
  const auto p = glorot_init(inst.spec.layer_sizes(), 3, 2.25);
  const auto good = check_hybrid_gradient(*inst.model, p, 4, 11);
  CHECK(good.discrepancies.size() == 4);
  CHECK(good.max_discrepancy <= 1e-4);
  CHECK(check_hybrid_gradient(*inst.model, p, 4, 11, 1.01).max_discrepancy > 1e-3);
  const std::vector<double> q(inst.mesh->num_nodes(), 2.0);
  CHECK(check_fem_gradient(*inst.model, q, 4, 11).max_discrepancy <= 1e-4);
}

TEST_CASE("cells are deterministic and tables are ordered") {
  const auto spec = load_example("ex51i", default_config_dir());
  RunOptions opts;
  opts.cells = 10;
  opts.max_iters = 40;
  opts.seed = 5;
  const auto a = run_cell(spec, 0.01, "hybrid", opts);
  const auto b = run_cell(spec, 0.01, "hybrid", opts);
  CHECK(a.ok);
  CHECK(a.error == b.error);
  CHECK(a.iterations == 40);
  CHECK(a.reference == spec.setting(0.01).reference_hybrid);

  const auto cells = run_table1({spec}, {0.05, 0.01}, {"hybrid", "fem"}, opts, 2);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].noise == 0.05);
  CHECK(cells[0].method == "hybrid");
  CHECK(cells[1].method == "fem");
  CHECK(cells[2].noise == 0.01);
  CHECK(cells[2].error == a.error);

  const fs::path dir = fs::temp_directory_path() / "coeffrec_harness_table";
  write_table_csv(cells, dir / "t.csv", false);
  write_table_markdown(cells, dir / "t.md");
  const auto csv = read_file(dir / "t.csv");
  CHECK(csv.rfind("example,noise,method,gamma,relative_error,reference,ratio,delta,iterations,status\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  write_table_csv(cells, dir / "t2.csv", false);
  CHECK(read_file(dir / "t2.csv") == csv);
}

TEST_CASE("log-log slope of exact power laws") {
  CHECK(loglog_slope({0.1, 0.05, 0.025}, {0.01, 0.0025, 0.000625}) == doctest::Approx(2.0));
  CHECK(loglog_slope({1, 2, 4, 8}, {3, 3 * std::sqrt(2.0), 6, 6 * std::sqrt(2.0)}) == doctest::Approx(0.5));
}

TEST_CASE("forward convergence studies") {
  const auto h = run_convergence_study("fem-h", default_config_dir(), "ex51i", {});
  CHECK(h.slopes.at("elliptic-1d") == doctest::Approx(2.0).epsilon(0.1));
  CHECK(h.slopes.at("elliptic-2d") == doctest::Approx(2.0).epsilon(0.1));
  CHECK(h.slopes.at("parabolic-h") == doctest::Approx(2.0).epsilon(0.1));
  const auto t = run_convergence_study("fem-tau", default_config_dir(), "ex51i", {});
  CHECK(t.slopes.at("parabolic-tau") == doctest::Approx(1.0).epsilon(0.15));
  CHECK_THROWS_AS(run_convergence_study("bogus", default_config_dir(), "ex51i", {}), ConfigError);
}
