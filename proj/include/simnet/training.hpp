#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "simnet/dataset.hpp"
#include "simnet/model.hpp"
#include "simnet/nn.hpp"

namespace simnet {

struct ConvergenceConfig {
  std::size_t patience = 5;
  double min_delta = 1e-4;
};

struct TrainConfig {
  double margin = 0.8;
  nn::OptimizerConfig optimizer;
  std::size_t max_epochs = 100;
  ConvergenceConfig convergence;
  /// Upper bound on the share of each batch taken by mined pairs.
  double mined_fraction_cap = 0.5;
  /// Share of the pair set held out for convergence checks.
  double val_fraction = 0.1;
  /// Balanced pairs drawn for the first phase of train_with_refinement.
  std::size_t pair_count = 40'000;
  std::size_t candidate_pool_size = 200;
  std::size_t refinement_rounds = 1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;
  double train_loss = 0.0;
  double val_loss = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  bool empty() const noexcept { return epochs.empty(); }
  /// Distinct phase names in order of first appearance.
  std::vector<std::string> phases() const;
  /// One JSON object per line: {"epoch":..,"phase":..,"train_loss":..,"val_loss":..}
  std::string to_jsonl() const;
  void append(const TrainingLog& other);
};

/// Splits pairs into (train, val) with a seeded shuffle. With fewer than two
/// pairs, or a zero val share, the train set doubles as the validation set.
void split_pairs(const PairBatch& pairs, double val_fraction, std::uint64_t seed,
                 PairBatch& train_out, PairBatch& val_out);

/// Mean pair_loss of the model over `pairs`.
double mean_pair_loss(const SimNetModel& model, const Dataset& dataset, const PairBatch& pairs,
                      double margin);

/// Mini-batch SGD on the mean margin loss until the validation loss stops
/// improving by more than min_delta for `patience` epochs, or max_epochs.
TrainingLog train(SimNetModel& model, const Dataset& dataset, const PairBatch& pairs,
                  const TrainConfig& cfg);

/// Ordered pairs (i, j), i != j, drawn from `pool` on which the model does
/// worse than cosine: s < cos for a match, s > cos for a non-match.
PairBatch mine_difficult_pairs(const SimNetModel& model, const Dataset& dataset,
                               std::span<const std::size_t> pool);

/// Same, over a random pool of `candidate_pool_size` non-query items.
PairBatch mine_difficult_pairs(const SimNetModel& model, const Dataset& dataset,
                               std::size_t candidate_pool_size, std::uint64_t seed);

/// Train on balanced random pairs to convergence, mine difficult pairs from a
/// fresh random image set, mix them into training (capped per batch) and
/// retrain to convergence. Phases are logged as "base" and "refine-<round>".
TrainingLog train_with_refinement(SimNetModel& model, const Dataset& dataset,
                                  const TrainConfig& cfg);

/// Same, starting from a given base pair set.
TrainingLog train_with_refinement(SimNetModel& model, const Dataset& dataset,
                                  const PairBatch& base_pairs, const TrainConfig& cfg);

struct EndToEndConfig {
  /// Phase 1: encoder frozen, only the similarity network trains.
  TrainConfig frozen;
  /// Phase 2: both networks train with this optimizer.
  nn::OptimizerConfig joint_optimizer;
  std::size_t joint_max_epochs = 20;
};

/// Applies the encoder to every item (rows of the result are encoder outputs).
Dataset encode_dataset(const nn::Network& encoder, const Dataset& raw);

/// Two-phase training of encoder + similarity network on raw inputs. Gradients
/// flow from the score through the concatenation and normalization into the
/// encoder during phase 2. Phases are logged as "frozen" and "joint".
TrainingLog train_end_to_end(nn::Network& encoder, SimNetModel& model, const Dataset& raw,
                             const EndToEndConfig& cfg);

}  // namespace simnet
