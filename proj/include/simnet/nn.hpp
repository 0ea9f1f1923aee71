#pragma once

// Minimal dense network engine: forward pass, backpropagation, SGD with
// momentum and weight decay, and a finite-difference gradient checker.
// All computation is in double precision.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simnet/matrix.hpp"

namespace simnet::nn {

enum class Activation : std::uint8_t { ReLU = 0, Identity = 1 };

struct DenseLayer {
  Matrix weights;            // out_dim x in_dim
  std::vector<double> bias;  // out_dim
  Activation activation = Activation::Identity;

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
};

/// Ordered stack of dense layers.
///
/// The constructor only checks that layer dimensions chain. `build` produces the
/// standard topology (ReLU on every layer but the last, Identity on the last).
class Network {
 public:
  Network() = default;
  Network(std::size_t input_dim, std::vector<DenseLayer> layers);

  /// He-style Gaussian init: std sqrt(2/in) for ReLU layers, sqrt(1/in) for the
  /// final Identity layer, zero biases. Deterministic in `seed`.
  static Network build(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                       std::size_t output_dim, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept;
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;

  std::span<const DenseLayer> layers() const noexcept { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  /// Mutable access invalidates caches produced by earlier forward passes.
  DenseLayer& mutable_layer(std::size_t i) {
    ++revision_;
    return layers_.at(i);
  }

  bool has_standard_topology() const noexcept;
  bool all_finite() const noexcept;

  /// Incremented on every mutation; forward caches remember it.
  std::uint64_t revision() const noexcept { return revision_; }
  void mark_modified() noexcept { ++revision_; }

  /// Parameter equality (ignores revision).
  bool same_parameters(const Network& other) const noexcept;

 private:
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
  std::uint64_t revision_ = 0;
};

/// Activations kept by a forward pass, one row per sample.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer
  const Network* net = nullptr;
  std::uint64_t revision = 0;

  const Matrix& output() const { return post.back(); }
  std::size_t batch_size() const noexcept { return input.rows(); }
};

/// Forward pass over a batch (rows of `input` are samples).
ForwardCache forward_batch(const Network& net, Matrix input);

/// Outputs only; same arithmetic as forward_batch.
Matrix predict_batch(const Network& net, const Matrix& input);

struct ForwardResult {
  std::vector<double> output;
  ForwardCache cache;
};

ForwardResult forward(const Network& net, std::span<const double> input);

struct LayerGradient {
  Matrix weights;
  std::vector<double> bias;
};

/// Per-layer parameter gradients, shaped exactly like the owning network.
/// Also used for momentum buffers.
struct GradientSet {
  std::vector<LayerGradient> layers;

  static GradientSet zeros_like(const Network& net);
  bool matches(const Network& net) const noexcept;
  bool all_finite() const noexcept;
  double max_abs() const noexcept;
  void add(const GradientSet& other);
  void scale(double factor) noexcept;
};

/// Gradients of sum_b <output_b, upstream_b> with respect to every parameter.
/// If `input_grad` is given it receives the gradient with respect to the input.
GradientSet backprop(const Network& net, const ForwardCache& cache, const Matrix& upstream,
                     Matrix* input_grad = nullptr);

GradientSet backprop(const Network& net, const ForwardCache& cache,
                     std::span<const double> upstream);

struct OptimizerConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 100;
  double weight_decay = 0.0005;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

/// v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v.
void sgd_step(Network& net, const GradientSet& grads, GradientSet& velocity,
              const OptimizerConfig& cfg);

struct GradCheckOptions {
  /// Upstream vector defining the scalar output·upstream; empty means all ones.
  std::vector<double> upstream;
  /// Check at most this many randomly chosen entries per weight matrix and per
  /// bias vector; 0 checks every parameter.
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::string diagnostic;  // set when the error is NaN or a parameter is non-finite
};

/// Compares backprop against central finite differences. Relative error per
/// parameter is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckResult grad_check(const Network& net, std::span<const double> input, double epsilon,
                           const GradCheckOptions& options = {});

/// Smallest |pre-activation| over all ReLU units for this input; used to avoid
/// checking gradients at kinks.
double min_relu_margin(const Network& net, std::span<const double> input);

}  // namespace simnet::nn
