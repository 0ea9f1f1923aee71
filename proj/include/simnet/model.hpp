#pragma once

// The similarity network: a stack of fully connected layers that maps the
// concatenation of two feature vectors to a scalar similarity score.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simnet/dataset.hpp"
#include "simnet/nn.hpp"

namespace simnet {

enum class ArchPreset : std::uint8_t { A = 0, B = 1, C = 2, D = 3, Custom = 4 };

std::string_view to_string(ArchPreset preset) noexcept;
ArchPreset parse_arch_preset(std::string_view name);

/// Hidden layer widths of the network (the 1-unit output layer is implicit).
///
///   A = [1024, 1024]   B = [4096, 4096]   C = [8192, 8192]   D = [4096, 4096, 4096]
///
/// `width_scale` multiplies every hidden width; the result is rounded to the
/// nearest multiple of 8 with a minimum of 8.
struct ArchConfig {
  ArchPreset preset = ArchPreset::B;
  std::vector<std::size_t> hidden_dims;
  std::size_t feature_dim = 0;  // K; the network sees 2K inputs
  double width_scale = 1.0;

  static ArchConfig from_preset(ArchPreset preset, std::size_t feature_dim,
                                double width_scale = 1.0);
  static ArchConfig custom(std::vector<std::size_t> hidden_dims, std::size_t feature_dim,
                           double width_scale = 1.0);

  std::vector<std::size_t> scaled_hidden_dims() const;
  std::size_t input_dim() const noexcept { return 2 * feature_dim; }
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

enum class InputNorm : std::uint8_t { L2NormalizeEach = 0, None = 1 };

struct SimNetModel {
  ArchConfig arch;
  nn::Network net;
  InputNorm input_norm = InputNorm::L2NormalizeEach;

  std::size_t feature_dim() const noexcept { return arch.feature_dim; }
};

SimNetModel build_model(const ArchConfig& arch, std::uint64_t seed,
                        InputNorm input_norm = InputNorm::L2NormalizeEach);

/// out = x / ||x|| (or a copy for InputNorm::None). Throws on non-finite
/// values or a zero vector under L2 normalization.
void normalize_feature(InputNorm norm, std::span<const double> x, std::span<double> out);

/// Writes concat(norm(x_i), norm(x_j)) into `out` (length 2K). Throws on
/// dimension mismatch, non-finite values, or a zero vector under L2 normalization.
void encode_pair(InputNorm norm, std::span<const double> xi, std::span<const double> xj,
                 std::span<double> out);

/// s_ij = g(concat(norm(x_i), norm(x_j))). Not symmetric in general.
double score_pair(const SimNetModel& model, std::span<const double> xi,
                  std::span<const double> xj);

/// Scores query against features.row(i) for each i in `items`; same arithmetic
/// as score_pair.
std::vector<double> score_against(const SimNetModel& model, std::span<const double> query,
                                  const Matrix& features, std::span<const std::size_t> items);

/// Regression target: sim + margin for similar pairs, sim - margin otherwise.
/// Not clamped to [-1, 1].
inline double pair_target(double sim, PairLabel label, double margin) noexcept {
  return label == PairLabel::Similar ? sim + margin : sim - margin;
}

/// |s - target|.
double pair_loss(double score, double sim, PairLabel label, double margin) noexcept;

/// Plain SGD settings with a learning rate of 0.01.
inline nn::OptimizerConfig warmup_optimizer() {
  nn::OptimizerConfig o;
  o.learning_rate = 0.01;
  return o;
}

struct WarmupConfig {
  std::size_t train_pairs = 2'000'000;
  std::size_t val_pairs = 50'000;
  nn::OptimizerConfig optimizer = warmup_optimizer();
  std::uint64_t seed = 0;
  /// Validation MSE is re-checked for divergence after this many training pairs.
  std::size_t check_interval_pairs = 250'000;
};

struct WarmupReport {
  double mse = 0.0;
  double correlation_rho = 0.0;
  std::size_t pairs_trained = 0;
  std::size_t pairs_validated = 0;
  double initial_mse = 0.0;
};

/// Trains the model to imitate cosine similarity on random unit-norm vector
/// pairs (margin 0) and reports MSE and Pearson correlation against cosine on
/// held-out random pairs. Throws TrainingError if validation MSE exceeds ten
/// times its initial value.
WarmupReport warmup(SimNetModel& model, const WarmupConfig& cfg);

/// MSE and correlation of the model against cosine on `n_pairs` random
/// unit-norm pairs drawn from `seed`.
WarmupReport evaluate_against_cosine(const SimNetModel& model, std::size_t n_pairs,
                                     std::uint64_t seed);

}  // namespace simnet
