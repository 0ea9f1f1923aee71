#include "simnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "pair_trainer.hpp"
#include "simnet/baselines.hpp"
#include "simnet/error.hpp"
#include "simnet/retrieval.hpp"

namespace simnet {
namespace {

// Seed salts; plain train and the first refinement phase share them so that a
// refinement run with nothing mined reproduces plain training exactly.
constexpr std::uint64_t kSplitSalt = 1;
constexpr std::uint64_t kFitSalt = 2;
constexpr std::uint64_t kBaseSampleSalt = 3;
constexpr std::uint64_t kMineSalt = 100;
constexpr std::uint64_t kRefineFitSalt = 200;

void check_trainable(const Dataset& dataset, const PairBatch& pairs, std::size_t feature_dim) {
  if (pairs.empty()) throw TrainingError("empty pair set");
  if (!dataset.has_labels()) throw TrainingError("training needs a labeled dataset");
  if (dataset.dim() != feature_dim) {
    throw DimensionError("dataset features vs model input", feature_dim, dataset.dim());
  }
  const std::set<std::int32_t> classes(dataset.labels.begin(), dataset.labels.end());
  if (classes.size() < 2) {
    throw TrainingError("dataset has a single class; no dissimilar pairs exist");
  }
  for (const auto& p : pairs) {
    if (p.i >= dataset.size() || p.j >= dataset.size()) {
      throw InvalidArgument("pair index out of range");
    }
  }
}

std::vector<std::size_t> random_pool(const Dataset& dataset, std::size_t size, std::uint64_t seed) {
  if (size < 2) throw InvalidArgument("candidate pool needs at least 2 items");
  std::vector<std::size_t> eligible = dataset.training_indices();
  if (eligible.size() < 2) throw InvalidArgument("fewer than 2 non-query items to mine from");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool;
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(pool),
              std::min(size, eligible.size()), rng);
  return pool;
}

PairBatch with_recomputed_sims(const PairBatch& pairs, const Dataset& encoded) {
  PairBatch out = pairs;
  for (auto& p : out) p.baseline_sim = cosine_similarity(encoded.feature(p.i), encoded.feature(p.j));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  optimizer.validate();
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidArgument("margin must be >= 0");
  if (convergence.patience < 1) throw InvalidArgument("patience must be at least 1");
  if (!(mined_fraction_cap >= 0.0 && mined_fraction_cap <= 1.0)) {
    throw InvalidArgument("mined_fraction_cap must be in [0, 1]");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("val_fraction must be in [0, 1)");
  }
}

std::vector<std::string> TrainingLog::phases() const {
  std::vector<std::string> out;
  for (const auto& e : epochs) {
    if (std::find(out.begin(), out.end(), e.phase) == out.end()) out.push_back(e.phase);
  }
  return out;
}

std::string TrainingLog::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["phase"] = e.phase;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void TrainingLog::append(const TrainingLog& other) {
  epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
}

void split_pairs(const PairBatch& pairs, double val_fraction, std::uint64_t seed,
                 PairBatch& train_out, PairBatch& val_out) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(pairs.size())));
  train_out.clear();
  val_out.clear();
  if (n_val == 0 || n_val >= pairs.size()) {
    for (std::size_t k : order) train_out.push_back(pairs[k]);
    val_out = train_out;
    return;
  }
  for (std::size_t t = 0; t < order.size(); ++t) {
    (t < pairs.size() - n_val ? train_out : val_out).push_back(pairs[order[t]]);
  }
}

double mean_pair_loss(const SimNetModel& model, const Dataset& dataset, const PairBatch& pairs,
                      double margin) {
  const Matrix prepared = detail::prepare_features(dataset, model.input_norm);
  return detail::mean_loss(model.net, prepared, pairs, margin);
}

TrainingLog train(SimNetModel& model, const Dataset& dataset, const PairBatch& pairs,
                  const TrainConfig& cfg) {
  cfg.validate();
  check_trainable(dataset, pairs, model.feature_dim());
  TrainingLog log;
  if (cfg.max_epochs == 0) return log;
  const std::uint64_t seed = cfg.optimizer.seed;
  PairBatch train_set, val_set;
  split_pairs(pairs, cfg.val_fraction, detail::mix_seed(seed, kSplitSalt), train_set, val_set);
  const Matrix prepared = detail::prepare_features(dataset, model.input_norm);
  detail::fit(model.net, prepared, train_set, {}, val_set, cfg, "train",
              detail::mix_seed(seed, kFitSalt), log);
  return log;
}

PairBatch mine_difficult_pairs(const SimNetModel& model, const Dataset& dataset,
                               std::span<const std::size_t> pool) {
  if (pool.size() < 2) throw InvalidArgument("candidate pool needs at least 2 items");
  if (!dataset.has_labels()) throw InvalidArgument("mining needs a labeled dataset");
  if (dataset.dim() != model.feature_dim()) {
    throw DimensionError("dataset features vs model input", model.feature_dim(), dataset.dim());
  }
  for (std::size_t a : pool) {
    if (a >= dataset.size()) throw InvalidArgument("pool index out of range");
  }
  PairBatch candidates;
  candidates.reserve(pool.size() * (pool.size() - 1));
  for (std::size_t a : pool) {
    for (std::size_t b : pool) {
      if (a == b) continue;
      candidates.push_back({a, b, label_for(dataset.labels[a], dataset.labels[b]),
                            cosine_similarity(dataset.feature(a), dataset.feature(b))});
    }
  }
  const Matrix prepared = detail::prepare_features(dataset, model.input_norm);
  const std::vector<double> scores = detail::predict_pairs(model.net, prepared, candidates);
  PairBatch mined;
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    const auto& c = candidates[r];
    const bool worse = c.label == PairLabel::Similar ? scores[r] < c.baseline_sim
                                                     : scores[r] > c.baseline_sim;
    if (worse) mined.push_back(c);
  }
  return mined;
}

PairBatch mine_difficult_pairs(const SimNetModel& model, const Dataset& dataset,
                               std::size_t candidate_pool_size, std::uint64_t seed) {
  const auto pool = random_pool(dataset, candidate_pool_size, seed);
  return mine_difficult_pairs(model, dataset, pool);
}

TrainingLog train_with_refinement(SimNetModel& model, const Dataset& dataset,
                                  const PairBatch& base_pairs, const TrainConfig& cfg) {
  cfg.validate();
  check_trainable(dataset, base_pairs, model.feature_dim());
  TrainingLog log;
  if (cfg.max_epochs == 0) return log;
  const std::uint64_t seed = cfg.optimizer.seed;
  PairBatch train_set, val_set;
  split_pairs(base_pairs, cfg.val_fraction, detail::mix_seed(seed, kSplitSalt), train_set, val_set);
  const Matrix prepared = detail::prepare_features(dataset, model.input_norm);
  detail::fit(model.net, prepared, train_set, {}, val_set, cfg, "base",
              detail::mix_seed(seed, kFitSalt), log);

  PairBatch mined_pool;
  for (std::size_t round = 1; round <= cfg.refinement_rounds; ++round) {
    const std::string phase = "refine-" + std::to_string(round);
    const PairBatch mined = mine_difficult_pairs(model, dataset, cfg.candidate_pool_size,
                                                 detail::mix_seed(seed, kMineSalt + round));
    mined_pool.insert(mined_pool.end(), mined.begin(), mined.end());
    const bool usable =
        !mined_pool.empty() &&
        detail::mined_slots(1, cfg.optimizer.batch_size, cfg.mined_fraction_cap) > 0;
    if (!usable) {
      // Nothing to add: one evaluation-only epoch confirms the converged state.
      const std::size_t epoch = log.epochs.empty() ? 0 : log.epochs.back().epoch + 1;
      log.epochs.push_back({epoch, phase,
                            detail::mean_loss(model.net, prepared, train_set, cfg.margin),
                            detail::mean_loss(model.net, prepared, val_set, cfg.margin)});
      continue;
    }
    detail::fit(model.net, prepared, train_set, mined_pool, val_set, cfg, phase,
                detail::mix_seed(seed, kRefineFitSalt + round), log);
  }
  return log;
}

TrainingLog train_with_refinement(SimNetModel& model, const Dataset& dataset,
                                  const TrainConfig& cfg) {
  cfg.validate();
  const auto eligible = dataset.training_indices();
  const PairBatch pairs = sample_balanced_pairs(
      dataset, cfg.pair_count, detail::mix_seed(cfg.optimizer.seed, kBaseSampleSalt), eligible);
  return train_with_refinement(model, dataset, pairs, cfg);
}

Dataset encode_dataset(const nn::Network& encoder, const Dataset& raw) {
  if (encoder.input_dim() != raw.dim()) {
    throw DimensionError("encoder input", encoder.input_dim(), raw.dim());
  }
  Dataset out;
  out.name = raw.name;
  out.labels = raw.labels;
  out.ids = raw.ids;
  out.query_indices = raw.query_indices;
  out.features = nn::predict_batch(encoder, raw.features);
  return out;
}

TrainingLog train_end_to_end(nn::Network& encoder, SimNetModel& model, const Dataset& raw,
                             const EndToEndConfig& cfg) {
  cfg.frozen.validate();
  cfg.joint_optimizer.validate();
  if (encoder.output_dim() != model.feature_dim()) {
    throw DimensionError("encoder output vs similarity network input", model.feature_dim(),
                         encoder.output_dim());
  }
  if (encoder.input_dim() != raw.dim()) {
    throw DimensionError("encoder input", encoder.input_dim(), raw.dim());
  }
  const std::uint64_t seed = cfg.frozen.optimizer.seed;
  const std::size_t k = model.feature_dim();
  TrainingLog log;

  // Phase 1: encoder frozen.
  Dataset encoded = encode_dataset(encoder, raw);
  const PairBatch pairs =
      sample_balanced_pairs(encoded, cfg.frozen.pair_count,
                            detail::mix_seed(seed, kBaseSampleSalt), encoded.training_indices());
  check_trainable(encoded, pairs, k);
  PairBatch train_set, val_set;
  split_pairs(pairs, cfg.frozen.val_fraction, detail::mix_seed(seed, kSplitSalt), train_set,
              val_set);
  {
    const Matrix prepared = detail::prepare_features(encoded, model.input_norm);
    detail::fit(model.net, prepared, train_set, {}, val_set, cfg.frozen, "frozen",
                detail::mix_seed(seed, kFitSalt), log);
  }

  // Phase 2: joint fine-tuning. The cosine inside the target is treated as a
  // constant for each batch (no gradient flows through it).
  const auto& opt = cfg.joint_optimizer;
  const double margin = cfg.frozen.margin;
  const bool l2 = model.input_norm == InputNorm::L2NormalizeEach;
  nn::GradientSet vel_model = nn::GradientSet::zeros_like(model.net);
  nn::GradientSet vel_encoder = nn::GradientSet::zeros_like(encoder);
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::vector<LabeledPair> batch;
  Matrix xi, xj, input, upstream, d_input, d_fi, d_fj;
  std::vector<double> norm_i, norm_j;

  for (std::size_t e = 0; e < cfg.joint_max_epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(detail::mix_seed(seed, 1000 + e));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += opt.batch_size) {
      const std::size_t n = std::min(opt.batch_size, order.size() - pos);
      batch.clear();
      xi.resize(n, raw.dim());
      xj.resize(n, raw.dim());
      for (std::size_t r = 0; r < n; ++r) {
        batch.push_back(train_set[order[pos + r]]);
        const auto a = raw.feature(batch[r].i);
        const auto b = raw.feature(batch[r].j);
        std::copy(a.begin(), a.end(), xi.row(r).begin());
        std::copy(b.begin(), b.end(), xj.row(r).begin());
      }
      const nn::ForwardCache enc_i = nn::forward_batch(encoder, xi);
      const nn::ForwardCache enc_j = nn::forward_batch(encoder, xj);
      input.resize(n, 2 * k);
      norm_i.assign(n, 1.0);
      norm_j.assign(n, 1.0);
      for (std::size_t r = 0; r < n; ++r) {
        const auto fi = enc_i.output().row(r);
        const auto fj = enc_j.output().row(r);
        batch[r].baseline_sim = cosine_similarity(fi, fj);
        auto dst = input.row(r);
        encode_pair(model.input_norm, fi, fj, dst);
        if (l2) {
          norm_i[r] = std::sqrt(dot(fi, fi));
          norm_j[r] = std::sqrt(dot(fj, fj));
        }
      }
      const nn::ForwardCache sim_cache = nn::forward_batch(model.net, input);
      detail::loss_gradient(sim_cache.output(), batch, margin, upstream, loss_sum);
      const nn::GradientSet g_model = nn::backprop(model.net, sim_cache, upstream, &d_input);

      // Back through the per-vector normalization: d_f = (d_y - y (y . d_y)) / ||f||.
      d_fi.resize(n, k);
      d_fj.resize(n, k);
      for (std::size_t r = 0; r < n; ++r) {
        const auto y = sim_cache.input.row(r);
        const auto dy = d_input.row(r);
        for (int side = 0; side < 2; ++side) {
          const std::size_t off = side == 0 ? 0 : k;
          auto dst = side == 0 ? d_fi.row(r) : d_fj.row(r);
          if (!l2) {
            for (std::size_t c = 0; c < k; ++c) dst[c] = dy[off + c];
            continue;
          }
          double proj = 0.0;
          for (std::size_t c = 0; c < k; ++c) proj += y[off + c] * dy[off + c];
          const double inv = 1.0 / (side == 0 ? norm_i[r] : norm_j[r]);
          for (std::size_t c = 0; c < k; ++c) dst[c] = (dy[off + c] - y[off + c] * proj) * inv;
        }
      }
      nn::GradientSet g_encoder = nn::backprop(encoder, enc_i, d_fi);
      g_encoder.add(nn::backprop(encoder, enc_j, d_fj));

      nn::sgd_step(model.net, g_model, vel_model, opt);
      nn::sgd_step(encoder, g_encoder, vel_encoder, opt);
    }

    encoded = encode_dataset(encoder, raw);
    const Matrix prepared = detail::prepare_features(encoded, model.input_norm);
    const double val_loss =
        detail::mean_loss(model.net, prepared, with_recomputed_sims(val_set, encoded), margin);
    const double train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!std::isfinite(val_loss) || !encoder.all_finite() || !model.net.all_finite()) {
      throw TrainingError("end-to-end training diverged at joint epoch " + std::to_string(e));
    }
    const std::size_t epoch = log.epochs.empty() ? 0 : log.epochs.back().epoch + 1;
    log.epochs.push_back({epoch, "joint", train_loss, val_loss});
    if (val_loss < best - cfg.frozen.convergence.min_delta) {
      best = val_loss;
      stale = 0;
    } else if (++stale >= cfg.frozen.convergence.patience) {
      break;
    }
  }
  return log;
}

}  // namespace simnet
