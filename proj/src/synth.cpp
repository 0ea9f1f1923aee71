#include "simnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "simnet/error.hpp"
#include "simnet/matrix.hpp"

namespace simnet {
namespace {

void normalize(std::span<double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 == 0.0) throw TrainingError("generated a zero vector");
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

std::string make_id(char prefix, std::size_t group, std::size_t k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%c%03zu_%04zu", prefix, group, k);
  return buf;
}

// Partner class for the bridge items of class c, and the index of that pair.
std::pair<std::size_t, std::size_t> bridge_partner(std::size_t c, std::size_t n_classes) {
  if (n_classes % 2 == 1 && c == n_classes - 1) return {0, c / 2};
  return {c ^ 1u, c / 2};
}

void scan_violations(const Dataset& d, const std::vector<std::uint8_t>& is_bridge, double margin,
                     SynthMetadata& meta) {
  Matrix gram;
  gemm_abt(d.features, d.features, gram);
  const std::size_t n = d.size();
  double worst = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (!is_bridge[b]) continue;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == b) continue;
      const double ab = gram(a, b);
      for (std::size_t c = a + 1; c < n; ++c) {
        if (c == b || d.labels[a] == d.labels[c]) continue;
        const double lo = std::min(ab, gram(b, c));
        const double excess = lo - (gram(a, c) + margin);
        if (excess > 0.0) {
          ++meta.violating_triples;
          if (excess > worst) {
            worst = excess;
            meta.example = ViolatingTriple{a, b, c, ab, gram(b, c), gram(a, c)};
          }
        }
      }
    }
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (n_classes == 0) throw InvalidArgument("n_classes must be positive");
  if (per_class_count == 0) throw InvalidArgument("per_class_count must be positive");
  if (dim == 0) throw InvalidArgument("dim must be positive");
  if (!(noise > 0.0) || !std::isfinite(noise)) throw InvalidArgument("noise sigma must be positive");
  if (!(bridge_fraction >= 0.0 && bridge_fraction <= 1.0)) {
    throw InvalidArgument("bridge_fraction must lie in [0, 1]");
  }
  if (!(query_fraction >= 0.0 && query_fraction <= 1.0)) {
    throw InvalidArgument("query_fraction must lie in [0, 1]");
  }
  if (bridge_fraction > 0.0 && n_classes < 2) {
    throw InvalidArgument("bridge items need at least 2 classes");
  }
  if (query_fraction > 0.0 && per_class_count < 2) {
    throw InvalidArgument("per_class_count must be at least 2 when queries are requested");
  }
  if (!(violation_margin >= 0.0) || !std::isfinite(violation_margin)) {
    throw InvalidArgument("violation_margin must be non-negative");
  }
}

std::string SynthMetadata::summary(const SynthSpec& spec) const {
  std::ostringstream out;
  out << "synthetic dataset\n";
  out << "  seed: " << spec.seed << "\n";
  out << "  classes: " << spec.n_classes << " x " << spec.per_class_count << " slots, dim "
      << spec.dim << ", noise sigma " << spec.noise << "\n";
  out << "  items: " << items << " (" << bridge_items << " bridge items in " << bridge_classes
      << " bridge classes)\n";
  out << "  label classes: " << base_classes + bridge_classes << "\n";
  out << "  queries: " << queries << "\n";
  out << "  violating triples (margin " << violation_margin << "): " << violating_triples << "\n";
  if (example) {
    out << "  example: items " << example->a << ", " << example->b << " (bridge), " << example->c
        << ": cos(a,b) " << example->cos_ab << ", cos(b,c) " << example->cos_bc << ", cos(a,c) "
        << example->cos_ac << "\n";
  }
  return out.str();
}

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t k = spec.dim;
  const std::size_t m = spec.per_class_count;

  Matrix prototypes(spec.n_classes, k);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    auto p = prototypes.row(c);
    for (double& v : p) v = gauss(rng);
    normalize(p);
  }

  const auto n_bridge = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(m), std::round(spec.bridge_fraction * static_cast<double>(m))));
  const std::size_t n = spec.n_classes * m;

  SynthResult result;
  Dataset& d = result.dataset;
  d.name = "synthetic";
  d.features = Matrix(n, k);
  d.labels.resize(n);
  d.ids.resize(n);
  std::vector<std::uint8_t> is_bridge(n, 0);
  std::vector<std::uint8_t> used_pair(spec.n_classes, 0);

  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const auto proto = prototypes.row(c);
    for (std::size_t t = 0; t < m - n_bridge; ++t, ++row) {
      auto x = d.features.row(row);
      for (std::size_t j = 0; j < k; ++j) x[j] = proto[j] + spec.noise * gauss(rng);
      normalize(x);
      d.labels[row] = static_cast<std::int32_t>(c);
      d.ids[row] = make_id('c', c, t);
    }
    if (n_bridge == 0) continue;
    const auto [partner, pair] = bridge_partner(c, spec.n_classes);
    used_pair[pair] = 1;
    const auto other = prototypes.row(partner);
    for (std::size_t t = 0; t < n_bridge; ++t, ++row) {
      auto x = d.features.row(row);
      for (std::size_t j = 0; j < k; ++j) {
        x[j] = 0.5 * (proto[j] + other[j]) + spec.noise * gauss(rng);
      }
      normalize(x);
      d.labels[row] = static_cast<std::int32_t>(spec.n_classes + pair);
      d.ids[row] = make_id('b', c, t);
      is_bridge[row] = 1;
    }
  }

  const auto n_queries =
      static_cast<std::size_t>(std::round(spec.query_fraction * static_cast<double>(n)));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::shuffle(all.begin(), all.end(), rng);
  d.query_indices.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_queries));
  std::sort(d.query_indices.begin(), d.query_indices.end());

  SynthMetadata& meta = result.metadata;
  meta.items = n;
  meta.base_classes = spec.n_classes;
  meta.bridge_classes = static_cast<std::size_t>(std::count(used_pair.begin(), used_pair.end(), 1));
  meta.bridge_items = n_bridge * spec.n_classes;
  meta.queries = n_queries;
  meta.violation_margin = spec.violation_margin;
  scan_violations(d, is_bridge, spec.violation_margin, meta);
  return result;
}

}  // namespace simnet
