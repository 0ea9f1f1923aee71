#pragma once

// Reference similarity functions: cosine, negated Euclidean distance and a
// trained affine map over the concatenated pair.

#include <span>
#include <vector>

#include "simnet/dataset.hpp"
#include "simnet/training.hpp"

namespace simnet {

/// Cosine of the angle between two non-zero vectors. Throws on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// -||a - b||, so that higher means more similar.
double neg_euclidean(std::span<const double> a, std::span<const double> b);

/// Affine map from concat(x_i, x_j) to a score.
struct LinearModel {
  std::vector<double> weights;  // 2K
  double bias = 0.0;

  std::size_t feature_dim() const noexcept { return weights.size() / 2; }
  bool all_finite() const noexcept;
  bool operator==(const LinearModel&) const = default;
};

LinearModel make_linear_model(std::size_t feature_dim, std::uint64_t seed);

/// dot(weights, concat(x_i, x_j)) + bias.
double linear_score(const LinearModel& m, std::span<const double> xi, std::span<const double> xj);

/// Trains the affine baseline with the same margin loss and optimizer as the
/// similarity network. The margin defaults to 0.2 in `linear_train_config`.
LinearModel train_linear(const Dataset& dataset, const PairBatch& pairs, const TrainConfig& cfg,
                         TrainingLog* log = nullptr);

/// Same, continuing from an existing model.
TrainingLog train_linear(LinearModel& model, const Dataset& dataset, const PairBatch& pairs,
                         const TrainConfig& cfg);

TrainConfig linear_train_config();

}  // namespace simnet
