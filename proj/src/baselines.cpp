#include "simnet/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "pair_trainer.hpp"
#include "simnet/error.hpp"

namespace simnet {
namespace {

nn::Network to_network(const LinearModel& m) {
  nn::DenseLayer layer;
  layer.activation = nn::Activation::Identity;
  layer.weights = Matrix(1, m.weights.size());
  std::copy(m.weights.begin(), m.weights.end(), layer.weights.data());
  layer.bias = {m.bias};
  return nn::Network(m.weights.size(), {std::move(layer)});
}

LinearModel from_network(const nn::Network& net) {
  const auto& layer = net.layer(0);
  LinearModel m;
  m.weights.assign(layer.weights.values().begin(), layer.weights.values().end());
  m.bias = layer.bias[0];
  return m;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity", a.size(), b.size());
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) throw InvalidArgument("cosine similarity of a zero vector is undefined");
  return std::clamp(dot(a, b) / std::sqrt(aa * bb), -1.0, 1.0);
}

double neg_euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("neg_euclidean", a.size(), b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return -std::sqrt(s);
}

bool LinearModel::all_finite() const noexcept {
  return std::isfinite(bias) &&
         std::all_of(weights.begin(), weights.end(), [](double w) { return std::isfinite(w); });
}

LinearModel make_linear_model(std::size_t feature_dim, std::uint64_t seed) {
  if (feature_dim == 0) throw InvalidArgument("feature dimension must be positive");
  return from_network(nn::Network::build(2 * feature_dim, {}, 1, seed));
}

double linear_score(const LinearModel& m, std::span<const double> xi, std::span<const double> xj) {
  const std::size_t k = m.feature_dim();
  if (xi.size() + xj.size() != m.weights.size()) {
    throw DimensionError("linear_score concatenated pair", m.weights.size(), xi.size() + xj.size());
  }
  if (xi.size() != k) throw DimensionError("linear_score x_i", k, xi.size());
  const std::span<const double> w(m.weights);
  return (dot(w.first(k), xi) + dot(w.subspan(k), xj)) + m.bias;
}

TrainConfig linear_train_config() {
  TrainConfig cfg;
  cfg.margin = 0.2;
  return cfg;
}

TrainingLog train_linear(LinearModel& model, const Dataset& dataset, const PairBatch& pairs,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw TrainingError("empty pair set");
  if (dataset.dim() != model.feature_dim()) {
    throw DimensionError("dataset features vs linear model", model.feature_dim(), dataset.dim());
  }
  TrainingLog log;
  if (cfg.max_epochs == 0) return log;
  // Same seeds as simnet::train so the two model families see identical batches.
  const std::uint64_t seed = cfg.optimizer.seed;
  PairBatch train_set, val_set;
  split_pairs(pairs, cfg.val_fraction, detail::mix_seed(seed, 1), train_set, val_set);
  const Matrix prepared = detail::prepare_features(dataset, InputNorm::None);
  nn::Network net = to_network(model);
  detail::fit(net, prepared, train_set, {}, val_set, cfg, "linear", detail::mix_seed(seed, 2), log);
  model = from_network(net);
  return log;
}

LinearModel train_linear(const Dataset& dataset, const PairBatch& pairs, const TrainConfig& cfg,
                         TrainingLog* log) {
  LinearModel model = make_linear_model(dataset.dim(), cfg.optimizer.seed);
  TrainingLog l = train_linear(model, dataset, pairs, cfg);
  if (log != nullptr) *log = std::move(l);
  return model;
}

}  // namespace simnet
