#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simnet/matrix.hpp"

namespace simnet {

/// Feature vectors (one row per image), class labels, stable ids and the
/// indices of the items used as retrieval queries.
struct Dataset {
  std::string name;
  Matrix features;                 // N x K
  std::vector<std::int32_t> labels;  // N, or empty when the store carries no labels
  std::vector<std::string> ids;      // N
  std::vector<std::size_t> query_indices;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::span<const double> feature(std::size_t i) const { return features.row(i); }
  bool has_labels() const noexcept { return !labels.empty(); }

  /// Items that are not queries (the pool training pairs are drawn from).
  std::vector<std::size_t> training_indices() const;

  /// Checks row/label/id counts and query index validity.
  void validate() const;
};

/// 1 iff the two images share a class label.
enum class PairLabel : std::uint8_t { Dissimilar = 0, Similar = 1 };

inline PairLabel label_for(std::int32_t a, std::int32_t b) noexcept {
  return a == b ? PairLabel::Similar : PairLabel::Dissimilar;
}

struct LabeledPair {
  std::size_t i = 0;
  std::size_t j = 0;
  PairLabel label = PairLabel::Dissimilar;
  double baseline_sim = 0.0;  // cosine of the two (normalized) features

  bool operator==(const LabeledPair&) const = default;
};

using PairBatch = std::vector<LabeledPair>;

}  // namespace simnet
