#include "simnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "simnet/error.hpp"

namespace simnet::nn {
namespace {

void apply_activation(Activation act, const Matrix& pre, Matrix& post) {
  post = pre;
  if (act == Activation::ReLU) {
    for (double& v : post.values()) v = v > 0.0 ? v : 0.0;
  }
}

void add_bias(Matrix& z, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

bool finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

// Extended-precision forward pass for the finite-difference oracle.
long double scalar_output(const Network& net, std::span<const double> input,
                          std::span<const double> upstream) {
  std::vector<long double> x(input.begin(), input.end()), y;
  for (const auto& l : net.layers()) {
    y.assign(l.out_dim(), 0.0L);
    for (std::size_t o = 0; o < l.out_dim(); ++o) {
      long double acc = l.bias[o];
      const auto w = l.weights.row(o);
      for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<long double>(w[i]) * x[i];
      y[o] = l.activation == Activation::ReLU && acc < 0.0L ? 0.0L : acc;
    }
    x.swap(y);
  }
  long double s = 0.0L;
  for (std::size_t i = 0; i < upstream.size(); ++i) s += x[i] * upstream[i];
  return s;
}

std::vector<std::size_t> choose_indices(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return all;
  std::vector<std::size_t> picked;
  picked.reserve(limit);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), limit, rng);
  return picked;
}

}  // namespace

Network::Network(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  if (input_dim_ == 0) throw InvalidArgument("network input dimension must be positive");
  if (layers_.empty()) throw InvalidArgument("network needs at least one layer");
  std::size_t expected_in = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    if (l.in_dim() != expected_in) {
      throw DimensionError("layer " + std::to_string(i) + " input", expected_in, l.in_dim());
    }
    if (l.out_dim() == 0) throw InvalidArgument("layer " + std::to_string(i) + " has no outputs");
    if (l.bias.size() != l.out_dim()) {
      throw DimensionError("layer " + std::to_string(i) + " bias", l.out_dim(), l.bias.size());
    }
    expected_in = l.out_dim();
  }
}

Network Network::build(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                       std::size_t output_dim, std::uint64_t seed) {
  if (input_dim == 0 || output_dim == 0) {
    throw InvalidArgument("network dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  const std::size_t n_layers = hidden_dims.size() + 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const bool last = i + 1 == n_layers;
    const std::size_t out = last ? output_dim : hidden_dims[i];
    if (out == 0) throw InvalidArgument("hidden dimension must be positive");
    DenseLayer layer;
    layer.activation = last ? Activation::Identity : Activation::ReLU;
    layer.weights = Matrix(out, in);
    layer.bias.assign(out, 0.0);
    const double stddev = std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(in));
    std::normal_distribution<double> gauss(0.0, stddev);
    for (double& w : layer.weights.values()) w = gauss(rng);
    layers.push_back(std::move(layer));
    in = out;
  }
  return Network(input_dim, std::move(layers));
}

std::size_t Network::output_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

bool Network::has_standard_topology() const noexcept {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Activation want = i + 1 == layers_.size() ? Activation::Identity : Activation::ReLU;
    if (layers_[i].activation != want) return false;
  }
  return !layers_.empty();
}

bool Network::all_finite() const noexcept {
  for (const auto& l : layers_) {
    if (!finite(l.weights.values()) || !finite(l.bias)) return false;
  }
  return true;
}

bool Network::same_parameters(const Network& other) const noexcept {
  if (input_dim_ != other.input_dim_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.weights != b.weights || a.bias != b.bias) return false;
  }
  return true;
}

ForwardCache forward_batch(const Network& net, Matrix input) {
  if (input.cols() != net.input_dim()) {
    throw DimensionError("forward input", net.input_dim(), input.cols());
  }
  ForwardCache cache;
  cache.net = &net;
  cache.revision = net.revision();
  cache.input = std::move(input);
  cache.pre.resize(net.layer_count());
  cache.post.resize(net.layer_count());
  const Matrix* a = &cache.input;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const DenseLayer& layer = net.layer(i);
    gemm_abt(*a, layer.weights, cache.pre[i]);
    add_bias(cache.pre[i], layer.bias);
    apply_activation(layer.activation, cache.pre[i], cache.post[i]);
    a = &cache.post[i];
  }
  return cache;
}

Matrix predict_batch(const Network& net, const Matrix& input) {
  if (input.cols() != net.input_dim()) {
    throw DimensionError("forward input", net.input_dim(), input.cols());
  }
  Matrix current = input;
  Matrix next;
  for (const DenseLayer& layer : net.layers()) {
    gemm_abt(current, layer.weights, next);
    add_bias(next, layer.bias);
    if (layer.activation == Activation::ReLU) {
      for (double& v : next.values()) v = v > 0.0 ? v : 0.0;
    }
    std::swap(current, next);
  }
  return current;
}

ForwardResult forward(const Network& net, std::span<const double> input) {
  if (input.size() != net.input_dim()) {
    throw DimensionError("forward input", net.input_dim(), input.size());
  }
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data());
  ForwardResult result;
  result.cache = forward_batch(net, std::move(x));
  const auto out = result.cache.output().row(0);
  result.output.assign(out.begin(), out.end());
  return result;
}

GradientSet GradientSet::zeros_like(const Network& net) {
  GradientSet g;
  g.layers.reserve(net.layer_count());
  for (const auto& l : net.layers()) {
    g.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
  }
  return g;
}

bool GradientSet::matches(const Network& net) const noexcept {
  if (layers.size() != net.layer_count()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = net.layer(i);
    if (layers[i].weights.rows() != l.out_dim() || layers[i].weights.cols() != l.in_dim() ||
        layers[i].bias.size() != l.out_dim()) {
      return false;
    }
  }
  return true;
}

bool GradientSet::all_finite() const noexcept {
  for (const auto& l : layers) {
    if (!finite(l.weights.values()) || !finite(l.bias)) return false;
  }
  return true;
}

double GradientSet::max_abs() const noexcept {
  double m = 0.0;
  for (const auto& l : layers) {
    for (double v : l.weights.values()) m = std::max(m, std::abs(v));
    for (double v : l.bias) m = std::max(m, std::abs(v));
  }
  return m;
}

void GradientSet::add(const GradientSet& other) {
  if (other.layers.size() != layers.size()) {
    throw DimensionError("gradient add", layers.size(), other.layers.size());
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto dst = layers[i].weights.values();
    auto src = other.layers[i].weights.values();
    if (dst.size() != src.size()) throw DimensionError("gradient add", dst.size(), src.size());
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    for (std::size_t k = 0; k < layers[i].bias.size(); ++k) layers[i].bias[k] += other.layers[i].bias[k];
  }
}

void GradientSet::scale(double factor) noexcept {
  for (auto& l : layers) {
    for (double& v : l.weights.values()) v *= factor;
    for (double& v : l.bias) v *= factor;
  }
}

GradientSet backprop(const Network& net, const ForwardCache& cache, const Matrix& upstream,
                     Matrix* input_grad) {
  if (cache.net != &net || cache.revision != net.revision() ||
      cache.pre.size() != net.layer_count()) {
    throw Error("backprop: forward cache is stale or belongs to a different network");
  }
  if (upstream.rows() != cache.batch_size()) {
    throw DimensionError("backprop upstream rows", cache.batch_size(), upstream.rows());
  }
  if (upstream.cols() != net.output_dim()) {
    throw DimensionError("backprop upstream", net.output_dim(), upstream.cols());
  }

  GradientSet grads = GradientSet::zeros_like(net);
  Matrix d_act = upstream;
  Matrix d_pre, d_pre_t, prev_t, weights_t, d_prev;
  for (std::size_t li = net.layer_count(); li-- > 0;) {
    const DenseLayer& layer = net.layer(li);
    const Matrix& pre = cache.pre[li];
    const Matrix& prev = li == 0 ? cache.input : cache.post[li - 1];

    d_pre = d_act;
    if (layer.activation == Activation::ReLU) {
      auto dz = d_pre.values();
      auto z = pre.values();
      for (std::size_t k = 0; k < dz.size(); ++k) {
        if (!(z[k] > 0.0)) dz[k] = 0.0;
      }
    }

    transpose_into(d_pre, d_pre_t);
    transpose_into(prev, prev_t);
    gemm_abt(d_pre_t, prev_t, grads.layers[li].weights);

    auto& db = grads.layers[li].bias;
    for (std::size_t r = 0; r < d_pre.rows(); ++r) {
      auto row = d_pre.row(r);
      for (std::size_t o = 0; o < row.size(); ++o) db[o] += row[o];
    }

    if (li > 0 || input_grad != nullptr) {
      transpose_into(layer.weights, weights_t);
      gemm_abt(d_pre, weights_t, d_prev);
      d_act = std::move(d_prev);
      d_prev = Matrix();
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(d_act);
  return grads;
}

GradientSet backprop(const Network& net, const ForwardCache& cache,
                     std::span<const double> upstream) {
  Matrix u(1, upstream.size());
  std::copy(upstream.begin(), upstream.end(), u.data());
  return backprop(net, cache, u);
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning rate must be a finite non-negative number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be non-negative");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
}

void sgd_step(Network& net, const GradientSet& grads, GradientSet& velocity,
              const OptimizerConfig& cfg) {
  if (!grads.matches(net)) throw Error("sgd_step: gradient shapes do not match the network");
  if (velocity.layers.empty()) velocity = GradientSet::zeros_like(net);
  if (!velocity.matches(net)) throw Error("sgd_step: momentum buffer shapes do not match");

  const double lr = cfg.learning_rate;
  const double mu = cfg.momentum;
  const double wd = cfg.weight_decay;
  auto update = [&](std::span<double> param, std::span<const double> grad, std::span<double> vel) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      vel[k] = mu * vel[k] - lr * (grad[k] + wd * param[k]);
      param[k] += vel[k];
    }
  };
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    DenseLayer& layer = net.mutable_layer(i);
    update(layer.weights.values(), grads.layers[i].weights.values(),
           velocity.layers[i].weights.values());
    update(layer.bias, grads.layers[i].bias, velocity.layers[i].bias);
  }
}

double min_relu_margin(const Network& net, std::span<const double> input) {
  const ForwardResult fr = forward(net, input);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (net.layer(i).activation != Activation::ReLU) continue;
    for (double z : fr.cache.pre[i].values()) margin = std::min(margin, std::abs(z));
  }
  return margin;
}

GradCheckResult grad_check(const Network& net, std::span<const double> input, double epsilon,
                           const GradCheckOptions& options) {
  if (!(epsilon > 0.0)) throw InvalidArgument("grad_check epsilon must be positive");
  GradCheckResult result;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& l = net.layer(i);
    if (!finite(l.weights.values()) || !finite(l.bias)) {
      result.max_relative_error = nan;
      result.diagnostic = "layer " + std::to_string(i) + " has a non-finite parameter";
      return result;
    }
  }
  if (!finite(input)) {
    result.max_relative_error = nan;
    result.diagnostic = "input contains a non-finite value";
    return result;
  }

  std::vector<double> upstream = options.upstream;
  if (upstream.empty()) upstream.assign(net.output_dim(), 1.0);
  if (upstream.size() != net.output_dim()) {
    throw DimensionError("grad_check upstream", net.output_dim(), upstream.size());
  }

  const ForwardResult fr = forward(net, input);
  const GradientSet analytic = backprop(net, fr.cache, upstream);

  Network probe = net;
  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  auto check = [&](std::size_t layer, bool is_bias, std::size_t index, double grad) {
    DenseLayer& pl = probe.mutable_layer(layer);
    double& p = is_bias ? pl.bias[index] : pl.weights.values()[index];
    const double original = p;
    p = original + epsilon;
    const double hi = p;
    const long double plus = scalar_output(probe, input, upstream);
    p = original - epsilon;
    const double lo = p;
    const long double minus = scalar_output(probe, input, upstream);
    p = original;
    const double numeric = static_cast<double>((plus - minus) / (static_cast<long double>(hi) - lo));
    const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-12});
    const double rel = std::abs(grad - numeric) / denom;
    ++result.parameters_checked;
    if (std::isnan(rel)) {
      if (result.diagnostic.empty()) {
        result.diagnostic = "NaN relative error at layer " + std::to_string(layer) +
                            (is_bias ? " bias " : " weight ") + std::to_string(index);
      }
      worst = nan;
    } else if (!std::isnan(worst)) {
      worst = std::max(worst, rel);
    }
  };

  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    const auto& g = analytic.layers[li];
    for (std::size_t k : choose_indices(g.weights.size(), options.max_per_tensor, rng)) {
      check(li, false, k, g.weights.values()[k]);
    }
    for (std::size_t k : choose_indices(g.bias.size(), options.max_per_tensor, rng)) {
      check(li, true, k, g.bias[k]);
    }
  }
  result.max_relative_error = worst;
  return result;
}

}  // namespace simnet::nn
