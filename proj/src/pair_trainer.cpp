#include "pair_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "simnet/error.hpp"

namespace simnet::detail {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix prepare_features(const Dataset& dataset, InputNorm norm) {
  Matrix out(dataset.size(), dataset.dim());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    normalize_feature(norm, dataset.feature(i), out.row(i));
  }
  return out;
}

void fill_pair_inputs(const Matrix& prepared, std::span<const LabeledPair> pairs, Matrix& out) {
  const std::size_t k = prepared.cols();
  out.resize(pairs.size(), 2 * k);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    auto dst = out.row(r);
    const auto a = prepared.row(pairs[r].i);
    const auto b = prepared.row(pairs[r].j);
    std::copy(a.begin(), a.end(), dst.begin());
    std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(k));
  }
}

std::vector<double> predict_pairs(const nn::Network& net, const Matrix& prepared,
                                  std::span<const LabeledPair> pairs) {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  constexpr std::size_t kChunk = 1024;
  Matrix input;
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const auto chunk = pairs.subspan(start, std::min(kChunk, pairs.size() - start));
    fill_pair_inputs(prepared, chunk, input);
    const Matrix out = nn::predict_batch(net, input);
    for (std::size_t r = 0; r < chunk.size(); ++r) scores.push_back(out(r, 0));
  }
  return scores;
}

double mean_loss(const nn::Network& net, const Matrix& prepared, std::span<const LabeledPair> pairs,
                 double margin) {
  if (pairs.empty()) return 0.0;
  const auto scores = predict_pairs(net, prepared, pairs);
  double sum = 0.0;
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    sum += pair_loss(scores[r], pairs[r].baseline_sim, pairs[r].label, margin);
  }
  return sum / static_cast<double>(pairs.size());
}

void loss_gradient(const Matrix& scores, std::span<const LabeledPair> pairs, double margin,
                   Matrix& upstream, double& loss_sum) {
  const std::size_t n = pairs.size();
  upstream.resize(n, 1);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double diff = scores(r, 0) - pair_target(pairs[r].baseline_sim, pairs[r].label, margin);
    loss_sum += std::abs(diff);
    upstream(r, 0) = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
  }
}

std::size_t mined_slots(std::size_t base_count, std::size_t batch_size, double cap) {
  if (cap <= 0.0 || batch_size <= base_count) return 0;
  auto m = static_cast<std::size_t>(std::floor(cap * static_cast<double>(batch_size)));
  m = std::min(m, batch_size - base_count);
  while (m > 0 && static_cast<double>(m) > cap * static_cast<double>(base_count + m)) --m;
  return m;
}

void fit(nn::Network& net, const Matrix& prepared, const PairBatch& train, const PairBatch& mined,
         const PairBatch& val, const TrainConfig& cfg, std::string_view phase, std::uint64_t seed,
         TrainingLog& log) {
  if (train.empty()) throw TrainingError("no training pairs");
  const std::size_t batch = cfg.optimizer.batch_size;
  std::size_t base_per_batch = batch;
  if (!mined.empty()) {
    const auto reserved = static_cast<std::size_t>(std::floor(cfg.mined_fraction_cap *
                                                              static_cast<double>(batch)));
    base_per_batch = std::max<std::size_t>(1, batch - std::min(reserved, batch));
  }

  const std::size_t first_epoch = log.epochs.empty() ? 0 : log.epochs.back().epoch + 1;
  nn::GradientSet velocity = nn::GradientSet::zeros_like(net);
  std::mt19937_64 mined_rng(mix_seed(seed, 0xfeed));
  std::vector<std::size_t> mined_order(mined.size());
  std::iota(mined_order.begin(), mined_order.end(), std::size_t{0});
  std::shuffle(mined_order.begin(), mined_order.end(), mined_rng);
  std::size_t mined_cursor = 0;

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train.size());
  std::vector<LabeledPair> batch_pairs;
  Matrix input, upstream;

  for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed, e));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t pos = 0; pos < order.size();) {
      const std::size_t b = std::min(base_per_batch, order.size() - pos);
      batch_pairs.clear();
      for (std::size_t t = 0; t < b; ++t) batch_pairs.push_back(train[order[pos + t]]);
      pos += b;
      const std::size_t m = mined.empty() ? 0 : mined_slots(b, batch, cfg.mined_fraction_cap);
      for (std::size_t t = 0; t < m; ++t) {
        if (mined_cursor == mined_order.size()) {
          std::shuffle(mined_order.begin(), mined_order.end(), mined_rng);
          mined_cursor = 0;
        }
        batch_pairs.push_back(mined[mined_order[mined_cursor++]]);
      }

      fill_pair_inputs(prepared, batch_pairs, input);
      const nn::ForwardCache cache = nn::forward_batch(net, std::move(input));
      input = Matrix();
      loss_gradient(cache.output(), batch_pairs, cfg.margin, upstream, loss_sum);
      seen += batch_pairs.size();
      const nn::GradientSet grads = nn::backprop(net, cache, upstream);
      nn::sgd_step(net, grads, velocity, cfg.optimizer);
    }

    const double train_loss = loss_sum / static_cast<double>(seen);
    const double val_loss = mean_loss(net, prepared, val, cfg.margin);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !net.all_finite()) {
      throw TrainingError("training diverged in phase '" + std::string(phase) + "' at epoch " +
                          std::to_string(first_epoch + e));
    }
    log.epochs.push_back({first_epoch + e, std::string(phase), train_loss, val_loss});

    if (val_loss < best - cfg.convergence.min_delta) {
      best = val_loss;
      stale = 0;
    } else if (++stale >= cfg.convergence.patience) {
      break;
    }
  }
}

}  // namespace simnet::detail
