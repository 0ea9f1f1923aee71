#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "simnet/dataset.hpp"

namespace simnet {

/// Synthetic classes around random prototypes on the unit sphere, plus
/// "bridge" items that blend the prototypes of two classes (a centaur between
/// a person and a horse). Bridge items get a label of their own.
struct SynthSpec {
  std::size_t n_classes = 10;
  std::size_t per_class_count = 60;
  std::size_t dim = 64;
  /// Std-dev of the Gaussian noise added to each component before normalizing.
  double noise = 0.4;
  /// Share of each class slot replaced by bridge items.
  double bridge_fraction = 0.3;
  /// Share of items marked as queries.
  double query_fraction = 0.2;
  std::uint64_t seed = 0;
  /// Margin used by the triangle-violation scan.
  double violation_margin = 0.2;

  void validate() const;
};

struct ViolatingTriple {
  std::size_t a = 0, b = 0, c = 0;  // b is a bridge item; a and c have different labels
  double cos_ab = 0.0, cos_bc = 0.0, cos_ac = 0.0;
};

struct SynthMetadata {
  std::size_t items = 0;
  std::size_t base_classes = 0;
  std::size_t bridge_classes = 0;
  std::size_t bridge_items = 0;
  std::size_t queries = 0;
  /// Triples with cos(a,c) + margin < min(cos(a,b), cos(b,c)).
  std::size_t violating_triples = 0;
  std::optional<ViolatingTriple> example;
  double violation_margin = 0.0;

  std::string summary(const SynthSpec& spec) const;
};

struct SynthResult {
  Dataset dataset;
  SynthMetadata metadata;
};

SynthResult generate_synthetic(const SynthSpec& spec);

}  // namespace simnet
