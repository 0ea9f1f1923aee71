// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "simnet/baselines.hpp"
#include "simnet/io.hpp"
#include "simnet/model.hpp"
#include "simnet/nn.hpp"
#include "simnet/retrieval.hpp"
#include "simnet/synth.hpp"
#include "simnet/training.hpp"

using namespace simnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& text) {
  std::printf("      %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> unit_gaussian(std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(k);
  double n = 0.0;
  for (double& x : v) {
    x = g(rng);
    n += x * x;
  }
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

// ---- gradient correctness ----

void gradient_check() {
  const auto t0 = Clock::now();
  constexpr std::size_t kK = 64;
  constexpr double kMargin = 0.8;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SimNetModel m = build_model(ArchConfig::from_preset(ArchPreset::B, kK, 0.125), seed);
    std::mt19937_64 rng(seed + 7);
    std::vector<double> input(2 * kK);
    double upstream = 0.0;
    // Draw pairs until no ReLU sits near its kink and the loss is away from |0|.
    for (;;) {
      const auto a = unit_gaussian(kK, rng), b = unit_gaussian(kK, rng);
      const PairLabel label = rng() % 2 ? PairLabel::Similar : PairLabel::Dissimilar;
      encode_pair(m.input_norm, a, b, input);
      const double s = nn::forward(m.net, input).output[0];
      const double t = pair_target(cosine_similarity(a, b), label, kMargin);
      if (nn::min_relu_margin(m.net, input) < 1e-4 || std::abs(s - t) < 1e-4) continue;
      upstream = s > t ? 1.0 : -1.0;  // d|s - t| / ds
      break;
    }
    nn::GradCheckOptions opt;
    opt.upstream = {upstream};
    opt.max_per_tensor = 24;
    opt.seed = seed;
    const auto r = nn::grad_check(m.net, input, 1e-6, opt);
    if (std::isnan(r.max_relative_error)) {
      worst = r.max_relative_error;
      break;
    }
    worst = std::max(worst, r.max_relative_error);
    checked += r.parameters_checked;
  }
  const double elapsed = seconds_since(t0);
  report(worst <= 1e-5 && elapsed < 60.0, "gradient correctness",
         fmt("max relative error %.3g (<= 1e-5) over 100 scaled-B models, %zu parameters, "
             "%.1f s (< 60 s)",
             worst, checked, elapsed));
}

// ---- warm-up ----

SimNetModel warmup_check() {
  const auto t0 = Clock::now();
  constexpr std::size_t kK = 64;
  SimNetModel b = build_model(ArchConfig::from_preset(ArchPreset::B, kK, 0.125), 0);
  WarmupConfig cfg;
  const WarmupReport rb = warmup(b, cfg);
  note(fmt("B x1/8, %zu pairs: MSE %.5f, rho %.4f (%.0f s)", rb.pairs_trained, rb.mse,
           rb.correlation_rho, seconds_since(t0)));

  // Matched budget for the A/B/C ordering.
  WarmupConfig matched = cfg;
  matched.train_pairs = 1'000'000;
  std::vector<double> mse;
  for (ArchPreset p : {ArchPreset::A, ArchPreset::B, ArchPreset::C}) {
    const auto t = Clock::now();
    SimNetModel m = build_model(ArchConfig::from_preset(p, kK, 0.125), 0);
    const WarmupReport r = warmup(m, matched);
    mse.push_back(r.mse);
    note(fmt("%s x1/8, %zu pairs: MSE %.5f, rho %.4f (%.0f s)", std::string(to_string(p)).c_str(),
             r.pairs_trained, r.mse, r.correlation_rho, seconds_since(t)));
  }
  const double elapsed = seconds_since(t0);
  const bool ordered = mse[2] <= mse[1] && mse[1] <= mse[0];
  report(rb.mse <= 5e-3 && rb.correlation_rho >= 0.9 && ordered && elapsed < 1800.0, "warm-up",
         fmt("B x1/8 MSE %.5f (<= 5e-3), rho %.4f (>= 0.9); matched-budget MSE C %.5f <= B %.5f "
             "<= A %.5f: %s; %.0f s (< 1800 s)",
             rb.mse, rb.correlation_rho, mse[2], mse[1], mse[0], ordered ? "yes" : "no", elapsed));
  return b;
}

// ---- non-metric benchmark ----

SimNetModel benchmark_check(const SimNetModel& warmed, const Dataset& ds) {
  const auto t0 = Clock::now();
  const auto eligible = ds.training_indices();
  TrainConfig base;
  const PairBatch pairs = sample_balanced_pairs(ds, base.pair_count, 5, eligible);

  const double cos_map = mean_average_precision(cosine_scorer(), ds).mean_ap;

  TrainConfig lin_cfg = linear_train_config();
  const LinearModel lin = train_linear(ds, pairs, lin_cfg);
  const double lin_map = mean_average_precision(linear_scorer(lin), ds).mean_ap;

  SimNetModel plain = warmed;
  TrainConfig plain_cfg = base;
  plain_cfg.margin = 0.2;
  const TrainingLog plain_log = train(plain, ds, pairs, plain_cfg);
  const double plain_map = mean_average_precision(simnet_scorer(plain), ds).mean_ap;

  SimNetModel star = warmed;
  TrainConfig star_cfg = base;
  star_cfg.margin = 0.8;
  const TrainingLog star_log = train_with_refinement(star, ds, pairs, star_cfg);
  const double star_map = mean_average_precision(simnet_scorer(star), ds).mean_ap;

  note(fmt("epochs: SimNet %zu, SimNet* %zu", plain_log.epochs.size(), star_log.epochs.size()));
  const double elapsed = seconds_since(t0);
  const bool pass = star_map >= cos_map + 0.05 && star_map >= plain_map && star_map > lin_map &&
                    elapsed < 3600.0;
  report(pass, "non-metric benchmark",
         fmt("mAP cosine %.4f, Linear %.4f, SimNet %.4f, SimNet* %.4f; SimNet* >= cosine + 0.05, "
             ">= SimNet, > Linear; %.0f s (< 3600 s)",
             cos_map, lin_map, plain_map, star_map, elapsed));
  return star;
}

// ---- mining ----

void mining_check(const SimNetModel& model, const Dataset& ds) {
  const auto eligible = ds.training_indices();
  std::size_t total = 0;
  bool all_equal = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pool;
    std::sample(eligible.begin(), eligible.end(), std::back_inserter(pool), 200, rng);
    std::set<std::tuple<std::size_t, std::size_t>> oracle, got;
    for (std::size_t a : pool) {
      for (std::size_t b : pool) {
        if (a == b) continue;
        const double s = score_pair(model, ds.feature(a), ds.feature(b));
        const double c = cosine_similarity(ds.feature(a), ds.feature(b));
        if (ds.labels[a] == ds.labels[b] ? s < c : s > c) oracle.insert({a, b});
      }
    }
    const PairBatch mined = mine_difficult_pairs(model, ds, pool);
    for (const auto& p : mined) got.insert({p.i, p.j});
    all_equal = all_equal && got.size() == mined.size() && got == oracle;
    total += oracle.size();
  }
  report(all_equal, "mining correctness",
         fmt("20 seeds x 200-item pools, %zu difficult pairs in total, %s", total,
             all_equal ? "identical to the brute-force oracle" : "MISMATCH"));
}

// ---- AP oracle ----

void ap_check() {
  double worst = 0.0;
  std::size_t cases = 0;
  std::mt19937_64 rng(1);
  for (std::size_t n = 1; n <= 12; ++n) {
    RankedList ranked;
    ranked.items.resize(n);
    std::iota(ranked.items.begin(), ranked.items.end(), std::size_t{0});
    std::shuffle(ranked.items.begin(), ranked.items.end(), rng);
    ranked.scores.assign(n, 0.0);
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      std::vector<std::uint8_t> by_rank(n), by_item(n);
      for (std::size_t r = 0; r < n; ++r) {
        by_rank[r] = (mask >> r) & 1u;
        by_item[ranked.items[r]] = by_rank[r];
      }
      // Prefix table: sum over cut-offs k of precision@k * (recall@k - recall@k-1).
      const double total = static_cast<double>(std::count(by_rank.begin(), by_rank.end(), 1));
      double prev_recall = 0.0, oracle = 0.0, hits = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        hits += by_rank[k - 1];
        const double recall = hits / total;
        oracle += hits / static_cast<double>(k) * (recall - prev_recall);
        prev_recall = recall;
      }
      worst = std::max(worst, std::abs(average_precision(ranked, by_item) - oracle));
      ++cases;
    }
  }
  report(worst <= 1e-12, "AP oracle equivalence",
         fmt("%zu relevance bitmasks on galleries of 1..12 items, max |AP - oracle| %.3g (<= 1e-12)",
             cases, worst));
}

// ---- end-to-end ----

void end_to_end_check(const Dataset& raw) {
  constexpr std::size_t kFeature = 32;
  const auto make_encoder = [&] {
    return nn::Network::build(raw.dim(), std::vector<std::size_t>{64}, kFeature, 11);
  };
  const auto make_model = [] { return build_model(ArchConfig::custom({128, 128}, kFeature), 12); };
  EndToEndConfig cfg;
  cfg.frozen.margin = 0.8;
  cfg.frozen.optimizer.learning_rate = 0.01;
  cfg.frozen.max_epochs = 30;
  cfg.frozen.pair_count = 10'000;
  cfg.joint_optimizer = cfg.frozen.optimizer;
  cfg.joint_optimizer.learning_rate = 0.001;
  cfg.joint_max_epochs = 20;

  auto evaluate = [&](const nn::Network& enc, const SimNetModel& m) {
    return mean_average_precision(simnet_scorer(m), encode_dataset(enc, raw)).mean_ap;
  };

  // Phase 1 alone (identical seeds, no joint epochs) gives the frozen state.
  nn::Network enc1 = make_encoder();
  SimNetModel m1 = make_model();
  EndToEndConfig frozen_only = cfg;
  frozen_only.joint_max_epochs = 0;
  train_end_to_end(enc1, m1, raw, frozen_only);
  const double map1 = evaluate(enc1, m1);

  nn::Network enc2 = make_encoder();
  SimNetModel m2 = make_model();
  const TrainingLog log = train_end_to_end(enc2, m2, raw, cfg);
  const double map2 = evaluate(enc2, m2);
  const bool changed = !enc2.same_parameters(enc1);
  std::size_t joint_epochs = 0;
  for (const auto& e : log.epochs) joint_epochs += e.phase == "joint";
  report(map2 >= map1 - 0.01 && changed, "end-to-end trend",
         fmt("mAP frozen %.4f, joint %.4f (>= frozen - 0.01) after %zu joint epochs; encoder "
             "weights changed: %s",
             map1, map2, joint_epochs, changed ? "yes" : "no"));
}

// ---- determinism and formats ----

void determinism_check(const SimNetModel& trained, const Dataset& ds) {
  const fs::path dir = fs::temp_directory_path() / ("simnet_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::vector<std::string> problems;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) problems.push_back(what);
  };

  Dataset golden;
  golden.features = Matrix(1, 2);
  golden.features(0, 0) = 1.0;
  golden.features(0, 1) = -0.5;
  golden.labels = {7};
  golden.ids = {"0"};
  const std::vector<std::uint8_t> golden_bytes{
      'S', 'I', 'M', 'F', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 1,
      7,   0,   0,   0,   0, 0, 0x80, 0x3F, 0, 0, 0, 0xBF};
  expect(encode_feature_store(golden) == golden_bytes, "golden SIMF bytes");

  write_feature_store(dir / "a.simf", ds);
  write_feature_store(dir / "b.simf", read_feature_store(dir / "a.simf"));
  expect(read_file_bytes(dir / "a.simf") == read_file_bytes(dir / "b.simf"), "SIMF file round trip");

  const std::vector<AnyModel> models{
      AnyModel{trained}, AnyModel{make_linear_model(ds.dim(), 3)},
      AnyModel{EncoderSimNet{nn::Network::build(ds.dim(), std::vector<std::size_t>{16}, 8, 1),
                             build_model(ArchConfig::custom({16}, 8), 2)}}};
  for (const auto& m : models) {
    save_checkpoint(dir / "m.simc", m);
    save_checkpoint(dir / "n.simc", load_checkpoint(dir / "m.simc"));
    expect(read_file_bytes(dir / "m.simc") == read_file_bytes(dir / "n.simc"),
           "checkpoint round trip");
  }

  // Fixed-seed pipeline twice: generate, sample, train with refinement, evaluate.
  auto pipeline = [&] {
    SynthSpec spec;
    spec.per_class_count = 20;
    spec.seed = 9;
    const Dataset d = generate_synthetic(spec).dataset;
    SimNetModel m = build_model(ArchConfig::from_preset(ArchPreset::A, d.dim(), 1.0 / 16), 4);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.pair_count = 1000;
    cfg.candidate_pool_size = 40;
    train_with_refinement(m, d, cfg);
    return std::tuple{encode_feature_store(d), encode_checkpoint(m),
                      mean_average_precision(simnet_scorer(m), d, 1).to_table(),
                      mean_average_precision(simnet_scorer(m), d, 3).to_table()};
  };
  const auto p1 = pipeline(), p2 = pipeline();
  expect(p1 == p2, "fixed-seed pipeline");
  expect(std::get<2>(p1) == std::get<3>(p1), "thread-count invariance");
  fs::remove_all(dir);

  std::string detail = "golden SIMF bytes, SIMF and checkpoint round trips byte-identical, "
                       "fixed-seed pipeline bit-reproducible";
  if (!problems.empty()) {
    detail = "failed:";
    for (const auto& p : problems) detail += " [" + p + "]";
  }
  report(problems.empty(), "determinism and formats", detail);
}

}  // namespace

// With arguments, runs only the named quick checks: ap, grad, e2e.
int main(int argc, char** argv) {
  const auto t0 = Clock::now();
  const Dataset bench = generate_synthetic(SynthSpec{}).dataset;
  if (argc > 1) {
    for (int i = 1; i < argc; ++i) {
      const std::string name = argv[i];
      if (name == "ap") ap_check();
      if (name == "grad") gradient_check();
      if (name == "e2e") end_to_end_check(bench);
    }
    return failures == 0 ? 0 : 1;
  }
  ap_check();
  gradient_check();
  const SimNetModel warmed = warmup_check();
  const SimNetModel star = benchmark_check(warmed, bench);
  mining_check(star, bench);
  end_to_end_check(bench);
  determinism_check(star, bench);
  std::printf("%d failure(s), %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
