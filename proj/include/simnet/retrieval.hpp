#pragma once

// Ranking and mean-average-precision evaluation.
//
// Argument order is fixed: a scorer is always called as scorer(query, item).
// Learned scorers need not be symmetric, so swapping the arguments can change
// the ranking.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simnet/baselines.hpp"
#include "simnet/dataset.hpp"
#include "simnet/model.hpp"

namespace simnet {

class Scorer {
 public:
  using PairFn = std::function<double(std::span<const double>, std::span<const double>)>;
  /// Optional batched path: scores query against features.row(i) for i in items.
  using GalleryFn = std::function<std::vector<double>(
      std::span<const double>, const Matrix&, std::span<const std::size_t>)>;

  Scorer(std::string name, PairFn pair, GalleryFn gallery = {})
      : name_(std::move(name)), pair_(std::move(pair)), gallery_(std::move(gallery)) {}

  const std::string& name() const noexcept { return name_; }
  double operator()(std::span<const double> query, std::span<const double> item) const {
    return pair_(query, item);
  }
  std::vector<double> score_gallery(std::span<const double> query, const Matrix& features,
                                    std::span<const std::size_t> items) const;

 private:
  std::string name_;
  PairFn pair_;
  GalleryFn gallery_;
};

Scorer cosine_scorer();
Scorer euclid_scorer();
Scorer linear_scorer(LinearModel model, std::string name = "linear");
Scorer simnet_scorer(SimNetModel model, std::string name = "simnet");

/// ⌊n/2⌋ similar and ⌈n/2⌉ dissimilar pairs over `eligible` items (all items
/// when empty). Similar pairs pick a class uniformly among classes with at
/// least two eligible members, then two distinct members uniformly.
/// Dissimilar pairs pick an item uniformly, then a uniformly chosen item of a
/// different class.
PairBatch sample_balanced_pairs(const Dataset& dataset, std::size_t n_pairs, std::uint64_t seed,
                                std::span<const std::size_t> eligible = {});

struct RankedList {
  std::size_t query_index = 0;
  std::vector<std::size_t> items;  // descending score, ties by ascending index
  std::vector<double> scores;
};

/// Gallery of a query: the non-query items. When every item is a query, the
/// gallery is every other item (leave-one-out).
std::vector<std::size_t> gallery_for(const Dataset& dataset, std::size_t query_index);

/// Ranks the query's gallery by scorer(query, item).
RankedList rank(const Scorer& scorer, const Dataset& dataset, std::size_t query_index);

/// Gallery items sharing the query's label.
std::vector<std::uint8_t> relevance_for(const Dataset& dataset, std::size_t query_index);

/// (1/R) * sum of precision at each relevant rank; `relevant` is indexed by
/// dataset item. Throws if the ranked list holds no relevant item.
double average_precision(const RankedList& ranked, std::span<const std::uint8_t> relevant);

struct QueryResult {
  std::size_t query_index = 0;
  std::string query_id;
  double average_precision = 0.0;
};

struct EvalReport {
  std::string scorer;
  std::string dataset;
  std::vector<QueryResult> queries;
  double mean_ap = 0.0;
  std::size_t skipped_queries = 0;  // no relevant gallery item
  double elapsed_seconds = 0.0;     // timing; excluded from to_table()

  /// Human-readable per-query table with the mAP footer.
  std::string to_table() const;
  /// One record per query plus a trailing summary record (which carries timing).
  std::string to_jsonl() const;
};

/// Mean over the dataset's queries of average_precision. Queries without a
/// relevant gallery item are skipped and counted. Queries are evaluated on up
/// to `threads` threads; the result does not depend on the thread count.
EvalReport mean_average_precision(const Scorer& scorer, const Dataset& dataset,
                                  std::size_t threads = 1);

/// One row per report: scorer, mAP, evaluated and skipped query counts.
std::string comparison_table(std::span<const EvalReport> reports);

}  // namespace simnet
