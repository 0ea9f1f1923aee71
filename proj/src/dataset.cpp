#include "simnet/dataset.hpp"

#include <string>

#include "simnet/error.hpp"

namespace simnet {

std::vector<std::size_t> Dataset::training_indices() const {
  std::vector<std::uint8_t> is_query(size(), 0);
  for (std::size_t q : query_indices) {
    if (q < size()) is_query[q] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!is_query[i]) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  if (!labels.empty() && labels.size() != size()) {
    throw DimensionError("dataset labels", size(), labels.size());
  }
  if (ids.size() != size()) throw DimensionError("dataset ids", size(), ids.size());
  for (std::size_t q : query_indices) {
    if (q >= size()) throw InvalidArgument("query index " + std::to_string(q) + " out of range");
  }
}

}  // namespace simnet
