#pragma once

// Shared mini-batch training loop for any network mapping a 2K pair encoding
// to one score (the similarity network and the linear baseline).

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "simnet/dataset.hpp"
#include "simnet/model.hpp"
#include "simnet/nn.hpp"
#include "simnet/training.hpp"

namespace simnet::detail {

/// Every dataset row passed through normalize_feature.
Matrix prepare_features(const Dataset& dataset, InputNorm norm);

/// Rows of concat(prepared[i], prepared[j]) for each pair.
void fill_pair_inputs(const Matrix& prepared, std::span<const LabeledPair> pairs, Matrix& out);

std::vector<double> predict_pairs(const nn::Network& net, const Matrix& prepared,
                                  std::span<const LabeledPair> pairs);

double mean_loss(const nn::Network& net, const Matrix& prepared, std::span<const LabeledPair> pairs,
                 double margin);

/// Sign of (score - target) divided by the batch size: the gradient of the
/// batch-mean absolute loss with respect to each score.
void loss_gradient(const Matrix& scores, std::span<const LabeledPair> pairs, double margin,
                   Matrix& upstream, double& loss_sum);

/// Number of mined pairs allowed next to `base_count` base pairs so that the
/// mined share of the batch stays at or below `cap`.
std::size_t mined_slots(std::size_t base_count, std::size_t batch_size, double cap);

/// One training run to convergence. Each batch takes up to
/// mined_slots(...) pairs from `mined` (cycled) on top of its base pairs.
/// Epoch numbers continue from the last record already in `log`.
void fit(nn::Network& net, const Matrix& prepared, const PairBatch& train, const PairBatch& mined,
         const PairBatch& val, const TrainConfig& cfg, std::string_view phase, std::uint64_t seed,
         TrainingLog& log);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

}  // namespace simnet::detail
