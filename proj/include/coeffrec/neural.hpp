#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coeffrec/mesh.hpp"

namespace coeffrec {

/// Weights and biases of a fully connected tanh network
/// d = d_0 -> d_1 -> ... -> d_L = 1, affine output layer.
///
/// All parameters live in one flat vector, layer by layer, each layer's
/// weight matrix (row-major, d_l x d_{l-1}) followed by its bias. Gradients
/// with respect to the parameters use the same layout.
class MlpParams {
 public:
  MlpParams() = default;
  explicit MlpParams(std::vector<int> layer_sizes);
  MlpParams(std::vector<int> layer_sizes, std::vector<double> flat);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  /// Number of affine layers L.
  int depth() const { return int(sizes_.size()) - 1; }
  /// max_l d_l, including the input layer.
  int width() const;
  /// max-norm of all weights and biases.
  double max_abs() const;

  std::size_t size() const { return data_.size(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  /// Offset of A^(l) (l = 1..L) in the flat vector; the bias follows it.
  std::size_t weight_offset(int l) const { return offsets_[l - 1]; }
  std::size_t bias_offset(int l) const { return offsets_[l - 1] + std::size_t(sizes_[l]) * sizes_[l - 1]; }
  double& weight(int l, int i, int j) { return data_[weight_offset(l) + std::size_t(i) * sizes_[l - 1] + j]; }
  double weight(int l, int i, int j) const { return data_[weight_offset(l) + std::size_t(i) * sizes_[l - 1] + j]; }
  double& bias(int l, int i) { return data_[bias_offset(l) + i]; }
  double bias(int l, int i) const { return data_[bias_offset(l) + i]; }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> data_;
};

/// Glorot-uniform weights, zero hidden biases, output bias set to
/// output_bias. Deterministic in seed.
MlpParams glorot_init(std::vector<int> layer_sizes, std::uint64_t seed, double output_bias = 0.0);

/// q_theta(x).
double forward(const MlpParams& params, const Point& x);

/// Value and spatial gradient at one point.
struct NetValue {
  double value = 0.0;
  Point gradient{0.0, 0.0};
};
NetValue evaluate(const MlpParams& params, const Point& x);
Point input_gradient(const MlpParams& params, const Point& x);

/// Accumulates d/dtheta [seed_value * q(x) + seed_grad . grad_x q(x)] into
/// grad (same layout as params.flat()).
void param_vjp(const MlpParams& params, const Point& x, double seed_value, const Point& seed_grad,
               std::span<double> grad);

/// Box constraint 0 < c0 < c1.
struct BoxBounds {
  double c0 = 0.5;
  double c1 = 4.0;
};

struct Projected {
  double value;
  /// Derivative mask of the clamp: true on [c0, c1] (the bounds included).
  bool active;
};

Projected project_box(double v, const BoxBounds& bounds);

/// Sampled derivative sup-norms against the depth/width/max-norm bounds
/// R^L W^(L-1), 2 R^(2L) W^(2L-2) and 10 R^(3L) W^(3L-3).
struct DerivativeBoundReport {
  bool applicable = false;  // RW >= 2
  double R = 0.0;
  int W = 0;
  int L = 0;
  double sup_first = 0.0, sup_second = 0.0, sup_third = 0.0;
  double bound_first = 0.0, bound_second = 0.0, bound_third = 0.0;
  int violations = 0;
};

/// sample_count is the number of grid points per dimension over the closed
/// unit domain. First partials are exact; second and third partials are
/// central differences of the exact gradient.
DerivativeBoundReport derivative_bound_report(const MlpParams& params, int sample_count);

/// Text checkpoint: a "coeffrec-mlp 1" header line, a line of
/// comma-separated layer sizes, then one parameter per line in flat order
/// printed with 17 significant digits.
void save_checkpoint(const MlpParams& params, const std::filesystem::path& file);
MlpParams load_checkpoint(const std::filesystem::path& file);

}  // namespace coeffrec
