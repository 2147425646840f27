#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "coeffrec/field.hpp"
#include "coeffrec/inverse.hpp"
#include "coeffrec/mesh.hpp"
#include "coeffrec/neural.hpp"

namespace coeffrec {

/// One row of the regularization schedule of an example.
struct NoiseSetting {
  double noise = 0.0;
  double gamma_theta = 0.0;  // hybrid
  double gamma_h = 0.0;      // pure FEM
  double reference_hybrid = 0.0;
  double reference_fem = 0.0;
};

/// A named benchmark problem: analytic data from the built-in catalog,
/// numeric settings from a checked-in config file.
struct ExampleSpec {
  std::string id;
  std::string title;
  ProblemKind kind = ProblemKind::elliptic;
  int dim = 1;
  CoefficientField q_true;
  CoefficientField f;
  SpaceTimeField f_t;
  CoefficientField u0;
  double T = 1.0;
  double T0 = 0.0;
  Subdomain omega;

  int cells = 40;
  int time_steps = 1;
  int data_refinement = 1;  // uniform refinements of the data mesh
  std::vector<int> hidden{32, 32};
  double learning_rate = 1e-3;
  double output_bias = 2.25;  // initial output bias of the network
  BoxBounds bounds;
  double baseline_init = 2.25;
  int max_iters = 30000;
  int baseline_max_iters = 5000;
  double baseline_step = 1e-2;
  std::vector<NoiseSetting> schedule;

  Mesh inversion_mesh() const;
  /// Layer sizes d-hidden-1.
  std::vector<int> layer_sizes() const;
  const NoiseSetting& setting(double noise) const;
  /// InverseConfig for this example at a noise level.
  InverseConfig inverse_config(double noise, bool hybrid) const;
  PdeData pde_data() const;
};

/// Identifiers of the catalog: ex51i, ex51ii, ex52i, ex52ii, ex53.
std::vector<std::string> example_ids();
/// Catalog closures plus numeric settings from <config_dir>/<id>.ini.
ExampleSpec load_example(const std::string& id, const std::filesystem::path& config_dir);
/// Directory holding the checked-in example configs.
std::filesystem::path default_config_dir();

/// Exact states on the refined data mesh, transferred to the inversion mesh,
/// plus i.i.d. Gaussian noise scaled by noise * max |u|. Deterministic in
/// seed; the same seed gives the same draws at every noise level.
ObservationSet synthesize_observations(const ExampleSpec& spec, const Mesh& mesh, double noise, std::uint64_t seed);

/// ||q_true - q|| / ||q_true|| in L2 with the reference rule on a refined
/// evaluation mesh.
double relative_error(const CoefficientField& candidate, const ExampleSpec& spec);

/// Integral of ((q_true - q)/q_true)^2 (q_true |grad u|^2 + f u) with the
/// exact state on the refined data mesh. For parabolic examples the
/// time-summed variant tau^3 sum_j sum_{i<=j} sum_{n=i}^{j} of the integral
/// with f - u_t in place of f, over the observation window.
double weighted_error_diagnostic(const CoefficientField& candidate, const ExampleSpec& spec);

/// Time weights of the triple sum: entry n - N0 - 1 counts the (i, j)
/// pairs with N0 < i <= n <= j <= N.
std::vector<double> triple_sum_weights(int N0, int N);

struct RunOptions {
  std::uint64_t seed = 1;
  GradientMode gradient_mode = GradientMode::discrete_adjoint;
  AssemblyMode mode = AssemblyMode::quadrature(0);
  std::optional<int> max_iters;
  std::optional<double> gamma;
  std::optional<double> learning_rate;
  std::optional<int> cells;
  std::optional<int> time_steps;
  std::optional<std::vector<int>> hidden;
};

/// An example discretized and paired with synthetic data, ready to train.
/// Heap-held mesh so the model's mesh reference survives moves.
struct Instance {
  ExampleSpec spec;
  std::unique_ptr<Mesh> mesh;
  InverseConfig config;
  std::unique_ptr<StateModel> model;
};

/// Applies the overrides in opts, synthesizes data and builds the model.
/// method is "hybrid" or "fem". A noise level missing from the schedule
/// needs an explicit gamma.
Instance make_instance(const ExampleSpec& spec, double noise, const std::string& method, const RunOptions& opts);

struct GradientCheckReport {
  double max_discrepancy = 0.0;
  std::vector<double> discrepancies;  // one per direction
};

/// Directional central differences of the total loss against the adjoint
/// gradient: |g.d - (J(x+hd) - J(x-hd))/2h| / max(|g.d|, |fd|) for random
/// unit-max-norm directions d. corrupt scales the adjoint gradient before the
/// comparison (1 = untouched); it exists to exercise the failure path.
GradientCheckReport check_hybrid_gradient(const StateModel& model, const MlpParams& params, int directions,
                                          std::uint64_t seed, double corrupt = 1.0);
GradientCheckReport check_fem_gradient(const StateModel& model, std::span<const double> nodal_q, int directions,
                                       std::uint64_t seed, double corrupt = 1.0);

struct CellResult {
  std::string example;
  double noise = 0.0;
  std::string method;  // hybrid | fem
  double gamma = 0.0;
  double error = 0.0;
  double reference = 0.0;
  double delta = 0.0;
  int iterations = 0;
  double runtime_ms = 0.0;
  bool ok = true;
  std::string status;
  ReconstructionResult result;
};

/// synthesize -> train -> relative error for one (example, noise, method).
CellResult run_cell(const ExampleSpec& spec, double noise, const std::string& method, const RunOptions& opts);

/// Table of cells over examples x noise levels x methods, run on a worker
/// pool; rows are ordered independently of scheduling.
std::vector<CellResult> run_table1(const std::vector<ExampleSpec>& examples, const std::vector<double>& noise_levels,
                                   const std::vector<std::string>& methods, const RunOptions& opts, int jobs);

void write_table_csv(const std::vector<CellResult>& cells, const std::filesystem::path& file, bool with_timing);
void write_table_markdown(const std::vector<CellResult>& cells, const std::filesystem::path& file);

struct StudyRow {
  std::string series;
  double parameter = 0.0;
  double error = 0.0;
};

struct StudyResult {
  std::string kind;
  std::vector<StudyRow> rows;
  std::map<std::string, double> slopes;  // fitted log-log slope per series
};

/// Least-squares slope of log(error) against log(parameter).
double loglog_slope(const std::vector<double>& parameter, const std::vector<double>& error);

/// fem-h: elliptic and parabolic L2 errors against mesh size;
/// fem-tau: parabolic error against time step;
/// quad-n: reconstruction error against quadrature level 0..5;
/// noise-delta: reconstruction error against realized noise level.
StudyResult run_convergence_study(const std::string& kind, const std::filesystem::path& config_dir,
                                  const std::string& example_id, const RunOptions& opts);

void write_study_csv(const StudyResult& study, const std::filesystem::path& file);

}  // namespace coeffrec
