#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "secla/rng.hpp"

namespace secla {

using Vector = std::vector<double>;

// Dense row-major matrix with fixed dimensions.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> v);

struct LinearLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  static LinearLayer zeros(std::size_t in, std::size_t out);
  // U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  static LinearLayer fan_in_uniform(std::size_t in, std::size_t out, Rng& rng);
};

Vector linear_forward(const LinearLayer& layer, std::span<const double> x);
Vector relu(std::span<const double> x);

// Linear layers with ReLU between consecutive layers and none after the last.
struct Mlp {
  std::vector<LinearLayer> layers;

  std::size_t in_dim() const;
  std::size_t out_dim() const;

  static Mlp zeros_like(const Mlp& other);
  // Layer widths dims[0] -> dims[1] -> ... -> dims.back().
  static Mlp fan_in_uniform(std::span<const std::size_t> dims, Rng& rng);
};

// Per-layer inputs and pre-activations recorded by mlp_forward.
struct MlpCache {
  std::vector<Vector> inputs;
  std::vector<Vector> pre_activations;
};

struct MlpOutput {
  Vector y;
  MlpCache cache;
};

void check_chain(const Mlp& mlp);
MlpOutput mlp_forward(const Mlp& mlp, std::span<const double> x);
Vector mlp_apply(const Mlp& mlp, std::span<const double> x);

// Accumulates parameter gradients into `grads` (same shape as `mlp`) and
// returns the gradient with respect to the input.
Vector mlp_backward(const Mlp& mlp, const MlpCache& cache, std::span<const double> dy, Mlp& grads);

// Batched forms over many inputs.  Each input's result is independent of the
// rest of the batch and identical to mlp_forward / mlp_backward.
std::vector<MlpOutput> mlp_forward_batch(const Mlp& mlp, std::span<const Vector> xs);
// Parameter gradients are accumulated input by input, in order.
std::vector<Vector> mlp_backward_batch(const Mlp& mlp, std::span<const MlpCache* const> caches,
                                       std::span<const Vector> dys, Mlp& grads);

// Flat views over every weight and bias of an Mlp, in a fixed order.
void append_parameters(Mlp& mlp, std::vector<std::span<double>>& out);
void append_parameters(const Mlp& mlp, std::vector<std::span<const double>>& out);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<const std::span<double>> params, AdamConfig config = {});

  std::uint64_t step() const { return step_; }
  const AdamConfig& config() const { return config_; }

  friend void adam_step(std::span<const std::span<double>> params,
                        std::span<const std::span<const double>> grads, AdamState& state, double lr);

 private:
  AdamConfig config_;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
  std::uint64_t step_ = 0;
};

// Bias-corrected Adam update.  Shapes of params, grads and state moments must agree.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state, double lr);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink
};

struct GradCheckOptions {
  double h = 1e-5;
  // Denominator floor for the relative error, so coordinates where both
  // gradients vanish compare on an absolute scale.
  double floor = 1e-6;
};

using Objective = std::function<double(std::span<const double>)>;
// Identifies the active piece of a piecewise-smooth objective (ReLU masks,
// argmax choices).  Coordinates whose +/-h perturbation changes it are skipped.
using PieceSignature = std::function<std::vector<std::uint32_t>(std::span<const double>)>;

GradCheckResult grad_check(const Objective& objective, std::span<const double> params,
                           std::span<const double> analytic, GradCheckOptions options = {},
                           const PieceSignature& signature = {});

}  // namespace secla
