#include "simnet/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "simnet/baselines.hpp"
#include "simnet/error.hpp"

namespace simnet {
namespace {

std::vector<std::size_t> preset_dims(ArchPreset preset) {
  switch (preset) {
    case ArchPreset::A: return {1024, 1024};
    case ArchPreset::B: return {4096, 4096};
    case ArchPreset::C: return {8192, 8192};
    case ArchPreset::D: return {4096, 4096, 4096};
    case ArchPreset::Custom: break;
  }
  throw InvalidArgument("custom architecture has no preset dimensions");
}

void random_unit(std::mt19937_64& rng, std::normal_distribution<double>& gauss,
                 std::span<double> out) {
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& v : out) {
      v = gauss(rng);
      norm2 += v * v;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : out) v *= inv;
}

}  // namespace

std::string_view to_string(ArchPreset preset) noexcept {
  switch (preset) {
    case ArchPreset::A: return "A";
    case ArchPreset::B: return "B";
    case ArchPreset::C: return "C";
    case ArchPreset::D: return "D";
    case ArchPreset::Custom: return "Custom";
  }
  return "?";
}

ArchPreset parse_arch_preset(std::string_view name) {
  std::string upper(name);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "A") return ArchPreset::A;
  if (upper == "B") return ArchPreset::B;
  if (upper == "C") return ArchPreset::C;
  if (upper == "D") return ArchPreset::D;
  if (upper == "CUSTOM") return ArchPreset::Custom;
  throw InvalidArgument("unknown architecture preset '" + std::string(name) + "'");
}

ArchConfig ArchConfig::from_preset(ArchPreset preset, std::size_t feature_dim, double width_scale) {
  ArchConfig cfg;
  cfg.preset = preset;
  cfg.hidden_dims = preset_dims(preset);
  cfg.feature_dim = feature_dim;
  cfg.width_scale = width_scale;
  cfg.validate();
  return cfg;
}

ArchConfig ArchConfig::custom(std::vector<std::size_t> hidden_dims, std::size_t feature_dim,
                              double width_scale) {
  ArchConfig cfg;
  cfg.preset = ArchPreset::Custom;
  cfg.hidden_dims = std::move(hidden_dims);
  cfg.feature_dim = feature_dim;
  cfg.width_scale = width_scale;
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> ArchConfig::scaled_hidden_dims() const {
  std::vector<std::size_t> dims;
  dims.reserve(hidden_dims.size());
  for (std::size_t d : hidden_dims) {
    const double scaled = static_cast<double>(d) * width_scale;
    const auto rounded = static_cast<std::size_t>(std::llround(scaled / 8.0)) * 8;
    dims.push_back(std::max<std::size_t>(8, rounded));
  }
  return dims;
}

void ArchConfig::validate() const {
  if (feature_dim == 0) throw InvalidArgument("feature dimension K must be positive");
  if (!(width_scale > 0.0) || !std::isfinite(width_scale)) {
    throw InvalidArgument("width scale must be positive");
  }
  for (std::size_t d : hidden_dims) {
    if (d == 0) throw InvalidArgument("hidden dimensions must be positive");
  }
}

SimNetModel build_model(const ArchConfig& arch, std::uint64_t seed, InputNorm input_norm) {
  arch.validate();
  const auto hidden = arch.scaled_hidden_dims();
  return SimNetModel{arch, nn::Network::build(arch.input_dim(), hidden, 1, seed), input_norm};
}

void normalize_feature(InputNorm norm, std::span<const double> x, std::span<double> out) {
  if (out.size() != x.size()) throw DimensionError("normalized feature", x.size(), out.size());
  double norm2 = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("feature vector contains a non-finite value");
    norm2 += v * v;
  }
  if (norm == InputNorm::None) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  if (norm2 == 0.0) throw InvalidArgument("cannot L2-normalize a zero feature vector");
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * inv;
}

void encode_pair(InputNorm norm, std::span<const double> xi, std::span<const double> xj,
                 std::span<double> out) {
  if (xj.size() != xi.size()) throw DimensionError("pair second vector", xi.size(), xj.size());
  if (out.size() != 2 * xi.size()) throw DimensionError("pair encoding", 2 * xi.size(), out.size());
  normalize_feature(norm, xi, out.first(xi.size()));
  normalize_feature(norm, xj, out.subspan(xi.size()));
}

double score_pair(const SimNetModel& model, std::span<const double> xi,
                  std::span<const double> xj) {
  const std::size_t k = model.feature_dim();
  if (xi.size() != k) throw DimensionError("score_pair x_i", k, xi.size());
  if (xj.size() != k) throw DimensionError("score_pair x_j", k, xj.size());
  Matrix input(1, 2 * k);
  encode_pair(model.input_norm, xi, xj, input.row(0));
  return nn::predict_batch(model.net, input)(0, 0);
}

std::vector<double> score_against(const SimNetModel& model, std::span<const double> query,
                                  const Matrix& features, std::span<const std::size_t> items) {
  const std::size_t k = model.feature_dim();
  if (query.size() != k) throw DimensionError("score query", k, query.size());
  if (features.cols() != k) throw DimensionError("score gallery", k, features.cols());
  std::vector<double> scores;
  scores.reserve(items.size());
  constexpr std::size_t kChunk = 512;
  Matrix input;
  for (std::size_t start = 0; start < items.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, items.size() - start);
    input.resize(n, 2 * k);
    for (std::size_t r = 0; r < n; ++r) {
      encode_pair(model.input_norm, query, features.row(items[start + r]), input.row(r));
    }
    const Matrix out = nn::predict_batch(model.net, input);
    for (std::size_t r = 0; r < n; ++r) scores.push_back(out(r, 0));
  }
  return scores;
}

double pair_loss(double score, double sim, PairLabel label, double margin) noexcept {
  return std::abs(score - pair_target(sim, label, margin));
}

WarmupReport evaluate_against_cosine(const SimNetModel& model, std::size_t n_pairs,
                                     std::uint64_t seed) {
  const std::size_t k = model.feature_dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr std::size_t kChunk = 1000;
  std::vector<double> a(k), b(k);
  Matrix input;
  double sum_sq = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t start = 0; start < n_pairs; start += kChunk) {
    const std::size_t n = std::min(kChunk, n_pairs - start);
    input.resize(n, 2 * k);
    std::vector<double> cosines(n);
    for (std::size_t r = 0; r < n; ++r) {
      random_unit(rng, gauss, a);
      random_unit(rng, gauss, b);
      cosines[r] = cosine_similarity(a, b);
      encode_pair(model.input_norm, a, b, input.row(r));
    }
    const Matrix out = nn::predict_batch(model.net, input);
    for (std::size_t r = 0; r < n; ++r) {
      const double s = out(r, 0);
      const double c = cosines[r];
      sum_sq += (s - c) * (s - c);
      sx += s;
      sy += c;
      sxx += s * s;
      syy += c * c;
      sxy += s * c;
    }
  }
  WarmupReport report;
  report.pairs_validated = n_pairs;
  if (n_pairs == 0) return report;
  const double n = static_cast<double>(n_pairs);
  report.mse = sum_sq / n;
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double var_s = sxx / n - (sx / n) * (sx / n);
  const double var_c = syy / n - (sy / n) * (sy / n);
  if (var_s > 0.0 && var_c > 0.0) {
    report.correlation_rho = std::clamp(cov / std::sqrt(var_s * var_c), -1.0, 1.0);
  }
  return report;
}

WarmupReport warmup(SimNetModel& model, const WarmupConfig& cfg) {
  cfg.optimizer.validate();
  const std::size_t k = model.feature_dim();
  const std::uint64_t val_seed = cfg.seed ^ 0x9e3779b97f4a7c15ULL;
  const WarmupReport initial = evaluate_against_cosine(model, cfg.val_pairs, val_seed);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  nn::GradientSet velocity = nn::GradientSet::zeros_like(model.net);
  const std::size_t batch = cfg.optimizer.batch_size;
  std::vector<double> a(k), b(k), targets(batch);
  Matrix input;
  Matrix upstream;
  std::size_t trained = 0;
  std::size_t next_check = cfg.check_interval_pairs;
  while (trained < cfg.train_pairs) {
    const std::size_t n = std::min(batch, cfg.train_pairs - trained);
    input.resize(n, 2 * k);
    for (std::size_t r = 0; r < n; ++r) {
      random_unit(rng, gauss, a);
      random_unit(rng, gauss, b);
      targets[r] = cosine_similarity(a, b);
      encode_pair(model.input_norm, a, b, input.row(r));
    }
    const nn::ForwardCache cache = nn::forward_batch(model.net, std::move(input));
    upstream.resize(n, 1);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      const double diff = cache.output()(r, 0) - targets[r];
      upstream(r, 0) = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
    }
    const nn::GradientSet grads = nn::backprop(model.net, cache, upstream);
    nn::sgd_step(model.net, grads, velocity, cfg.optimizer);
    input = Matrix();
    trained += n;
    if (cfg.check_interval_pairs > 0 && trained >= next_check && trained < cfg.train_pairs) {
      next_check += cfg.check_interval_pairs;
      const WarmupReport mid = evaluate_against_cosine(model, cfg.val_pairs, val_seed);
      if (!std::isfinite(mid.mse) || mid.mse > 10.0 * initial.mse) {
        throw TrainingError("warm-up diverged after " + std::to_string(trained) +
                            " pairs: validation MSE " + std::to_string(mid.mse) +
                            " exceeds 10x the initial " + std::to_string(initial.mse));
      }
    }
  }

  WarmupReport report = evaluate_against_cosine(model, cfg.val_pairs, val_seed);
  if (!std::isfinite(report.mse) || report.mse > 10.0 * initial.mse) {
    throw TrainingError("warm-up diverged: validation MSE " + std::to_string(report.mse) +
                        " exceeds 10x the initial " + std::to_string(initial.mse));
  }
  report.pairs_trained = trained;
  report.initial_mse = initial.mse;
  return report;
}

}  // namespace simnet
