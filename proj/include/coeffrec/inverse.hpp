#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coeffrec/fem.hpp"
#include "coeffrec/field.hpp"
#include "coeffrec/forward.hpp"
#include "coeffrec/mesh.hpp"
#include "coeffrec/neural.hpp"
#include "coeffrec/quad.hpp"

namespace coeffrec {

enum class ProblemKind { elliptic, parabolic };
enum class GradientMode { discrete_adjoint, riesz };

/// Axis-aligned observation subdomain; `full` means the whole domain.
struct Subdomain {
  bool full = true;
  Point lo{0.0, 0.0};
  Point hi{1.0, 1.0};

  bool contains(const Point& x, int dim) const;
};

struct InverseConfig {
  ProblemKind kind = ProblemKind::elliptic;
  double gamma = 0.0;
  BoxBounds bounds;
  Subdomain omega;
  // parabolic time grid and observation window (T0, T)
  double T = 1.0;
  double T0 = 0.0;
  int N = 1;
  GradientMode gradient_mode = GradientMode::discrete_adjoint;
  AssemblyMode mode = AssemblyMode::quadrature(0);
  // ADAM
  double learning_rate = 1e-3;
  int max_iters = 30000;
  std::uint64_t seed = 0;
  double stop_rel_change = 1e-9;
  int stop_window = 500;
  int error_every = 100;
  // projected gradient baseline
  double baseline_step = 1e-2;
  double baseline_growth = 1.2;
  int baseline_max_iters = 5000;

  double tau() const { return T / N; }
  /// T0 / tau; throws if T0 is not on the time grid.
  int N0() const;
  void validate() const;
};

/// Noisy interior data. Elliptic: nodal vector z. Parabolic: z_n for
/// n = N0..N, stored at index n - N0.
struct ObservationSet {
  ProblemKind kind = ProblemKind::elliptic;
  std::vector<double> z;
  std::vector<std::vector<double>> zn;
  int N0 = 0;
  int N = 0;
  double noise_rel = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;

  const std::vector<double>& at_step(int n) const { return zn.at(std::size_t(n - N0)); }
};

/// Right-hand sides and initial value of the forward model.
struct PdeData {
  CoefficientField f;   // elliptic source
  SpaceTimeField f_t;   // parabolic source
  CoefficientField u0;  // parabolic initial value
};

/// Discrete forward map and output least-squares misfit as a function of
/// the element integrals s_K of the (projected) coefficient, together with
/// the adjoint-based sensitivities dJ/ds_K.
class StateModel {
 public:
  StateModel(const Mesh& mesh, PdeData data, InverseConfig cfg, ObservationSet obs);

  const Mesh& mesh() const { return *mesh_; }
  const InverseConfig& config() const { return cfg_; }
  const ObservationSet& observations() const { return obs_; }
  const QuadratureRule& rule() const { return rule_; }
  const P1Pattern& pattern() const { return pattern_; }
  const SparseMatrix& mass() const { return mass_; }
  /// Mass matrix over elements whose barycenter lies in the observation set.
  const SparseMatrix& observed_mass() const { return mass_omega_; }
  /// Unit-coefficient stiffness without boundary conditions.
  const SparseMatrix& laplace() const { return laplace_; }

  struct Result {
    double data_fit = 0.0;
    std::vector<std::vector<double>> states;    // u (elliptic) or U^0..U^N
    std::vector<std::vector<double>> adjoints;  // v (elliptic) or W^0..W^N
    std::vector<double> sensitivity;            // dJ/ds_K
  };
  Result evaluate(std::span<const double> element_integrals, bool with_gradient) const;

  /// Element integrals of a field sampled at rule().points.
  std::vector<double> integrals_from_points(std::span<const double> point_values) const;

 private:
  const Mesh* mesh_;
  InverseConfig cfg_;
  ObservationSet obs_;
  PdeData data_;
  QuadratureRule rule_;
  P1Pattern pattern_;
  SparseMatrix mass_, mass_omega_, laplace_;
  std::vector<double> load_;
  std::vector<std::vector<double>> loads_;
  std::vector<double> u0_;
};

/// Loss and gradient of the hybrid scheme: NN coefficient through P_A.
class HybridObjective {
 public:
  explicit HybridObjective(const StateModel& model) : model_(&model) {}

  struct Evaluation {
    double loss = 0.0;
    double data_fit = 0.0;
    double penalty = 0.0;  // |grad q|^2 integral, unscaled
    std::vector<double> gradient;
    std::vector<double> riesz;  // nodal Riesz representative (riesz mode)
    double min_coefficient = 0.0, max_coefficient = 0.0;
  };
  Evaluation evaluate(const MlpParams& params, bool with_gradient) const;
  Evaluation evaluate(const MlpParams& params, bool with_gradient, GradientMode mode) const;

  const StateModel& model() const { return *model_; }

 private:
  const StateModel* model_;
};

/// Loss and gradient of the pure FEM scheme: nodal P1 coefficient.
class FemObjective {
 public:
  explicit FemObjective(const StateModel& model) : model_(&model) {}

  struct Evaluation {
    double loss = 0.0;
    double data_fit = 0.0;
    double penalty = 0.0;
    std::vector<double> gradient;  // d loss / d nodal value
  };
  Evaluation evaluate(std::span<const double> nodal_q, bool with_gradient) const;
  /// H1 Riesz representative of a nodal gradient: (M + K) G = g.
  std::vector<double> riesz(std::span<const double> nodal_gradient) const;

 private:
  const StateModel* model_;
};

double loss_elliptic(const StateModel& model, const MlpParams& params);
double loss_elliptic(const StateModel& model, std::span<const double> nodal_q);
double loss_parabolic(const StateModel& model, const MlpParams& params);
double loss_parabolic(const StateModel& model, std::span<const double> nodal_q);

/// Adjoint state v_h: A v = M_omega (z - u), zero boundary values.
FeFunction adjoint_elliptic(const StateModel& model, const FeFunction& u,
                            std::span<const double> element_integrals);
/// Discrete backward marching W^N = 0,
/// (M + tau A) W^(n-1) = M W^n + tau M_omega (z_n - U^n) [n >= N0].
std::vector<std::vector<double>> adjoint_parabolic(const StateModel& model,
                                                   std::span<const std::vector<double>> states,
                                                   std::span<const double> element_integrals);

std::vector<double> gradient_wrt_theta(const StateModel& model, const MlpParams& params);

struct ReconstructionResult {
  std::optional<MlpParams> params;
  std::optional<std::vector<double>> nodal_q;
  std::vector<double> loss_history;
  std::vector<double> data_fit_history;
  std::vector<double> penalty_history;
  std::vector<std::pair<int, double>> error_history;
  std::vector<double> wall_ms;
  int iterations = 0;
  double total_ms = 0.0;
  bool diverged = false;
  std::string message;
};

/// Callback for the relative error of the current coefficient.
using ErrorProbe = std::function<double(const CoefficientField&)>;

/// P_A(q_theta) as a field.
CoefficientField projected_network(const MlpParams& params, const BoxBounds& bounds);

/// ADAM (0.9, 0.999, 1e-8) on the hybrid loss. Throws Divergence on a
/// non-finite loss; the partial result is attached to the exception text
/// and also returned via partial when non-null.
ReconstructionResult train(const StateModel& model, MlpParams init, const ErrorProbe& error = {},
                           ReconstructionResult* partial = nullptr);

/// Projected H1-gradient descent on nodal values with step halving on loss
/// increase and growth on success; nodal values clipped to [c0, c1].
ReconstructionResult train_baseline_fem(const StateModel& model, std::vector<double> init,
                                        const ErrorProbe& error = {});

/// iteration, loss, data_fit, penalty, relative_error[, wall_ms].
void write_training_log(const ReconstructionResult& r, const std::filesystem::path& file, bool with_timing);

}  // namespace coeffrec
