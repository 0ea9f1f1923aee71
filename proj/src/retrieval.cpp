#include "simnet/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "simnet/error.hpp"

namespace simnet {

std::vector<double> Scorer::score_gallery(std::span<const double> query, const Matrix& features,
                                          std::span<const std::size_t> items) const {
  if (gallery_) return gallery_(query, features, items);
  std::vector<double> scores;
  scores.reserve(items.size());
  for (std::size_t i : items) scores.push_back(pair_(query, features.row(i)));
  return scores;
}

Scorer cosine_scorer() { return Scorer("cosine", cosine_similarity); }

Scorer euclid_scorer() { return Scorer("euclid", neg_euclidean); }

Scorer linear_scorer(LinearModel model, std::string name) {
  return Scorer(std::move(name), [m = std::move(model)](auto a, auto b) { return linear_score(m, a, b); });
}

Scorer simnet_scorer(SimNetModel model, std::string name) {
  auto shared = std::make_shared<const SimNetModel>(std::move(model));
  return Scorer(
      std::move(name), [shared](auto a, auto b) { return score_pair(*shared, a, b); },
      [shared](std::span<const double> q, const Matrix& features, std::span<const std::size_t> items) {
        return score_against(*shared, q, features, items);
      });
}

PairBatch sample_balanced_pairs(const Dataset& dataset, std::size_t n_pairs, std::uint64_t seed,
                                std::span<const std::size_t> eligible) {
  if (!dataset.has_labels()) throw InvalidArgument("pair sampling needs a labeled dataset");
  std::vector<std::size_t> items(eligible.begin(), eligible.end());
  if (items.empty()) {
    items.resize(dataset.size());
    std::iota(items.begin(), items.end(), std::size_t{0});
  }
  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i : items) {
    if (i >= dataset.size()) throw InvalidArgument("eligible index out of range");
    by_class[dataset.labels[i]].push_back(i);
  }
  if (by_class.size() < 2) throw InvalidArgument("pair sampling needs at least 2 classes");
  std::vector<const std::vector<std::size_t>*> multi;
  for (const auto& [label, members] : by_class) {
    if (members.size() >= 2) multi.push_back(&members);
  }
  const std::size_t n_similar = n_pairs / 2;
  const std::size_t n_dissimilar = n_pairs - n_similar;
  if (n_similar > 0 && multi.empty()) {
    throw InvalidArgument("no class has two members; a similar pair cannot be formed");
  }

  std::mt19937_64 rng(seed);
  PairBatch pairs;
  pairs.reserve(n_pairs);
  auto make = [&](std::size_t i, std::size_t j) {
    pairs.push_back({i, j, label_for(dataset.labels[i], dataset.labels[j]),
                     cosine_similarity(dataset.feature(i), dataset.feature(j))});
  };
  for (std::size_t t = 0; t < n_similar; ++t) {
    const auto& members = *multi[std::uniform_int_distribution<std::size_t>(0, multi.size() - 1)(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    make(members[a], members[b]);
  }
  std::uniform_int_distribution<std::size_t> any(0, items.size() - 1);
  for (std::size_t t = 0; t < n_dissimilar; ++t) {
    const std::size_t i = items[any(rng)];
    std::size_t j = items[any(rng)];
    while (dataset.labels[j] == dataset.labels[i]) j = items[any(rng)];
    make(i, j);
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

std::vector<std::size_t> gallery_for(const Dataset& dataset, std::size_t query_index) {
  std::vector<std::uint8_t> is_query(dataset.size(), 0);
  for (std::size_t q : dataset.query_indices) {
    if (q < dataset.size()) is_query[q] = 1;
  }
  const bool all_queries = std::all_of(is_query.begin(), is_query.end(), [](auto v) { return v != 0; });
  std::vector<std::size_t> gallery;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (i != query_index && (all_queries || !is_query[i])) gallery.push_back(i);
  }
  return gallery;
}

RankedList rank(const Scorer& scorer, const Dataset& dataset, std::size_t query_index) {
  if (query_index >= dataset.size()) {
    throw InvalidArgument("query index " + std::to_string(query_index) + " out of range");
  }
  RankedList ranked;
  ranked.query_index = query_index;
  const std::vector<std::size_t> gallery = gallery_for(dataset, query_index);
  const auto& id_of = [&](std::size_t i) {
    return i < dataset.ids.size() ? dataset.ids[i] : std::to_string(i);
  };
  std::vector<double> scores;
  try {
    scores = scorer.score_gallery(dataset.feature(query_index), dataset.features, gallery);
  } catch (const std::exception& e) {
    throw Error("scorer '" + scorer.name() + "' failed for query " + id_of(query_index) + ": " +
                e.what());
  }
  if (scores.size() != gallery.size()) {
    throw DimensionError("scorer '" + scorer.name() + "' output", gallery.size(), scores.size());
  }
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (std::isnan(scores[t])) {
      throw Error("scorer '" + scorer.name() + "' returned NaN for pair (" + id_of(query_index) +
                  ", " + id_of(gallery[t]) + ")");
    }
  }
  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Gallery is in ascending index order, so a stable sort breaks ties by index.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  ranked.items.reserve(order.size());
  ranked.scores.reserve(order.size());
  for (std::size_t t : order) {
    ranked.items.push_back(gallery[t]);
    ranked.scores.push_back(scores[t]);
  }
  return ranked;
}

std::vector<std::uint8_t> relevance_for(const Dataset& dataset, std::size_t query_index) {
  if (!dataset.has_labels()) throw InvalidArgument("relevance needs a labeled dataset");
  if (query_index >= dataset.size()) {
    throw InvalidArgument("query index " + std::to_string(query_index) + " out of range");
  }
  std::vector<std::uint8_t> rel(dataset.size(), 0);
  for (std::size_t i : gallery_for(dataset, query_index)) {
    rel[i] = dataset.labels[i] == dataset.labels[query_index];
  }
  return rel;
}

double average_precision(const RankedList& ranked, std::span<const std::uint8_t> relevant) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < ranked.items.size(); ++r) {
    const std::size_t item = ranked.items[r];
    if (item >= relevant.size()) throw InvalidArgument("relevance vector too short");
    if (relevant[item]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) throw InvalidArgument("average precision is undefined without relevant items");
  return sum / static_cast<double>(hits);
}

EvalReport mean_average_precision(const Scorer& scorer, const Dataset& dataset,
                                  std::size_t threads) {
  if (dataset.query_indices.empty()) throw InvalidArgument("dataset has no queries");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t nq = dataset.query_indices.size();
  std::vector<double> aps(nq, -1.0);
  std::vector<std::exception_ptr> failures(nq);

  auto work = [&](std::size_t worker, std::size_t n_workers) {
    for (std::size_t t = worker; t < nq; t += n_workers) {
      try {
        const std::size_t q = dataset.query_indices[t];
        const auto rel = relevance_for(dataset, q);
        if (std::none_of(rel.begin(), rel.end(), [](std::uint8_t v) { return v != 0; })) continue;
        aps[t] = average_precision(rank(scorer, dataset, q), rel);
      } catch (...) {
        failures[t] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(threads, 1, nq);
  if (n_workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work, w, n_workers);
    for (auto& th : pool) th.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  EvalReport report;
  report.scorer = scorer.name();
  report.dataset = dataset.name;
  double sum = 0.0;
  for (std::size_t t = 0; t < nq; ++t) {
    const std::size_t q = dataset.query_indices[t];
    if (aps[t] < 0.0) {
      ++report.skipped_queries;
      continue;
    }
    report.queries.push_back({q, q < dataset.ids.size() ? dataset.ids[q] : std::to_string(q), aps[t]});
    sum += aps[t];
  }
  if (report.queries.empty()) throw InvalidArgument("no query has a relevant gallery item");
  report.mean_ap = sum / static_cast<double>(report.queries.size());
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "scorer: " << scorer << "\n";
  out << "dataset: " << dataset << "\n";
  out << std::left << std::setw(24) << "query" << std::right << std::setw(10) << "AP" << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& q : queries) {
    out << std::left << std::setw(24) << q.query_id << std::right << std::setw(10)
        << q.average_precision << "\n";
  }
  out << "mAP " << mean_ap << " over " << queries.size() << " queries (" << skipped_queries
      << " skipped)\n";
  return out.str();
}

std::string EvalReport::to_jsonl() const {
  std::string out;
  for (const auto& q : queries) {
    nlohmann::ordered_json j;
    j["scorer"] = scorer;
    j["query_id"] = q.query_id;
    j["ap"] = q.average_precision;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json summary;
  summary["scorer"] = scorer;
  summary["dataset"] = dataset;
  summary["map"] = mean_ap;
  summary["queries"] = queries.size();
  summary["skipped"] = skipped_queries;
  summary["timing_seconds"] = elapsed_seconds;
  out += summary.dump() + "\n";
  return out;
}

std::string comparison_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  std::size_t width = 8;
  for (const auto& r : reports) width = std::max(width, r.scorer.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "scorer" << std::right
      << std::setw(10) << "mAP" << std::setw(10) << "queries" << std::setw(10) << "skipped"
      << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.scorer << std::right
        << std::setw(10) << r.mean_ap << std::setw(10) << r.queries.size() << std::setw(10)
        << r.skipped_queries << "\n";
  }
  return out.str();
}

}  // namespace simnet
