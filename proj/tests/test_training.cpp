#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "simnet/baselines.hpp"
#include "simnet/error.hpp"
#include "simnet/retrieval.hpp"
#include "simnet/synth.hpp"
#include "simnet/training.hpp"

using namespace simnet;

namespace {

Dataset small_synth(std::uint64_t seed = 0, std::size_t dim = 16) {
  SynthSpec spec;
  spec.n_classes = 6;
  spec.per_class_count = 20;
  spec.dim = dim;
  spec.seed = seed;
  return generate_synthetic(spec).dataset;
}

SimNetModel small_model(std::size_t dim = 16, std::uint64_t seed = 1) {
  return build_model(ArchConfig::custom({32, 32}, dim), seed);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.optimizer.learning_rate = 0.01;
  cfg.optimizer.batch_size = 50;
  cfg.max_epochs = 15;
  cfg.pair_count = 1500;
  cfg.candidate_pool_size = 40;
  return cfg;
}

// Brute force over every ordered pair of the pool, scoring one pair at a time.
std::set<std::tuple<std::size_t, std::size_t>> mining_oracle(const SimNetModel& m,
                                                             const Dataset& d,
                                                             const std::vector<std::size_t>& pool) {
  std::set<std::tuple<std::size_t, std::size_t>> out;
  for (std::size_t a : pool) {
    for (std::size_t b : pool) {
      if (a == b) continue;
      const double s = score_pair(m, d.feature(a), d.feature(b));
      const double c = cosine_similarity(d.feature(a), d.feature(b));
      const bool match = d.labels[a] == d.labels[b];
      if (match ? s < c : s > c) out.insert({a, b});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("split_pairs") {
  const Dataset d = small_synth();
  const PairBatch pairs = sample_balanced_pairs(d, 100, 1);
  PairBatch tr, va;
  split_pairs(pairs, 0.1, 3, tr, va);
  CHECK(tr.size() == 90);
  CHECK(va.size() == 10);
  PairBatch all = tr;
  all.insert(all.end(), va.begin(), va.end());
  auto key = [](const LabeledPair& p) { return std::tuple{p.i, p.j}; };
  std::multiset<std::tuple<std::size_t, std::size_t>> a, b;
  for (const auto& p : all) a.insert(key(p));
  for (const auto& p : pairs) b.insert(key(p));
  CHECK(a == b);

  split_pairs(PairBatch(pairs.begin(), pairs.begin() + 1), 0.5, 3, tr, va);
  CHECK(tr.size() == 1);
  CHECK(va == tr);
  split_pairs(pairs, 0.0, 3, tr, va);
  CHECK(tr.size() == 100);
  CHECK(va.size() == 100);
}

TEST_CASE("train lowers the validation loss and logs one record per epoch") {
  const Dataset d = small_synth();
  SimNetModel m = small_model();
  const TrainConfig cfg = small_config();
  const PairBatch pairs = sample_balanced_pairs(d, 1500, 2, d.training_indices());
  const double before = mean_pair_loss(m, d, pairs, cfg.margin);
  const TrainingLog log = train(m, d, pairs, cfg);
  REQUIRE(!log.empty());
  CHECK(log.epochs.size() <= cfg.max_epochs);
  CHECK(log.phases() == std::vector<std::string>{"train"});
  for (std::size_t e = 0; e < log.epochs.size(); ++e) CHECK(log.epochs[e].epoch == e);
  CHECK(mean_pair_loss(m, d, pairs, cfg.margin) < before);
  CHECK(m.net.all_finite());
}

TEST_CASE("train is reproducible under a fixed seed") {
  const Dataset d = small_synth();
  const PairBatch pairs = sample_balanced_pairs(d, 800, 2, d.training_indices());
  TrainConfig cfg = small_config();
  cfg.max_epochs = 4;
  SimNetModel a = small_model(), b = small_model();
  const TrainingLog la = train(a, d, pairs, cfg);
  const TrainingLog lb = train(b, d, pairs, cfg);
  CHECK(a.net.same_parameters(b.net));
  CHECK(la.to_jsonl() == lb.to_jsonl());
}

TEST_CASE("convergence stops after patience epochs without improvement") {
  const Dataset d = small_synth();
  const PairBatch pairs = sample_balanced_pairs(d, 400, 2, d.training_indices());
  TrainConfig cfg = small_config();
  cfg.optimizer.learning_rate = 0.0;
  cfg.optimizer.momentum = 0.0;
  cfg.max_epochs = 50;
  cfg.convergence.patience = 3;
  SimNetModel m = small_model();
  const auto before = m.net;
  const TrainingLog log = train(m, d, pairs, cfg);
  // Epoch 0 sets the best loss; three non-improving epochs follow.
  CHECK(log.epochs.size() == 4);
  CHECK(m.net.same_parameters(before));
}

TEST_CASE("train errors") {
  const Dataset d = small_synth();
  SimNetModel m = small_model();
  const TrainConfig cfg = small_config();
  CHECK_THROWS_AS(train(m, d, PairBatch{}, cfg), TrainingError);
  SimNetModel wrong = small_model(8);
  CHECK_THROWS_AS(train(wrong, d, sample_balanced_pairs(d, 10, 0), cfg), DimensionError);
  TrainConfig bad = cfg;
  bad.mined_fraction_cap = 1.5;
  CHECK_THROWS_AS(train(m, d, sample_balanced_pairs(d, 10, 0), bad), InvalidArgument);
  bad = cfg;
  bad.optimizer.batch_size = 0;
  CHECK_THROWS_AS(train(m, d, sample_balanced_pairs(d, 10, 0), bad), InvalidArgument);
}

TEST_CASE("mining equals the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = small_synth(seed);
    SimNetModel m = small_model(16, seed);
    std::vector<std::size_t> pool;
    for (std::size_t i = seed; i < d.size(); i += 3) pool.push_back(i);
    const PairBatch mined = mine_difficult_pairs(m, d, pool);
    std::set<std::tuple<std::size_t, std::size_t>> got;
    for (const auto& p : mined) {
      CHECK(p.i != p.j);
      CHECK(p.label == label_for(d.labels[p.i], d.labels[p.j]));
      CHECK(p.baseline_sim == cosine_similarity(d.feature(p.i), d.feature(p.j)));
      got.insert({p.i, p.j});
    }
    CHECK(got.size() == mined.size());
    CHECK(got == mining_oracle(m, d, pool));
  }
}

TEST_CASE("mining examples") {
  const Dataset d = small_synth();
  SimNetModel m = small_model();
  auto& last = m.net.mutable_layer(m.net.layer_count() - 1);
  last.weights.fill(0.0);
  SUBCASE("a model that always scores 2 fails only the non-matching pairs") {
    last.bias[0] = 2.0;
    const std::vector<std::size_t> pool{0, 1, 30, 31, 60};
    for (const auto& p : mine_difficult_pairs(m, d, pool)) CHECK(p.label == PairLabel::Dissimilar);
  }
  SUBCASE("a model that always scores -2 fails only the matching pairs") {
    last.bias[0] = -2.0;
    const std::vector<std::size_t> pool{0, 1, 2, 3};
    const PairBatch mined = mine_difficult_pairs(m, d, pool);
    for (const auto& p : mined) CHECK(p.label == PairLabel::Similar);
  }
  SUBCASE("errors") {
    const std::vector<std::size_t> one{0};
    CHECK_THROWS_AS(mine_difficult_pairs(m, d, one), InvalidArgument);
    const std::vector<std::size_t> out_of_range{0, 100000};
    CHECK_THROWS_AS(mine_difficult_pairs(m, d, out_of_range), InvalidArgument);
  }
  SUBCASE("random pools exclude queries and are seeded") {
    const PairBatch a = mine_difficult_pairs(m, d, 30, 4);
    CHECK(a == mine_difficult_pairs(m, d, 30, 4));
    std::set<std::size_t> queries(d.query_indices.begin(), d.query_indices.end());
    for (const auto& p : a) {
      CHECK(queries.count(p.i) == 0);
      CHECK(queries.count(p.j) == 0);
    }
  }
}

TEST_CASE("train_with_refinement") {
  const Dataset d = small_synth();
  TrainConfig cfg = small_config();
  cfg.max_epochs = 6;
  SUBCASE("logs a base phase then a refinement phase") {
    SimNetModel m = small_model();
    const TrainingLog log = train_with_refinement(m, d, cfg);
    const auto phases = log.phases();
    REQUIRE(phases.size() == 2);
    CHECK(phases[0] == "base");
    CHECK(phases[1] == "refine-1");
    for (std::size_t e = 0; e < log.epochs.size(); ++e) CHECK(log.epochs[e].epoch == e);
  }
  SUBCASE("extra rounds add phases") {
    cfg.refinement_rounds = 2;
    SimNetModel m = small_model();
    CHECK(train_with_refinement(m, d, cfg).phases().size() == 3);
  }
  SUBCASE("a zero cap matches plain training plus one confirmation epoch") {
    cfg.mined_fraction_cap = 0.0;
    const PairBatch pairs = sample_balanced_pairs(d, 800, 9, d.training_indices());
    SimNetModel a = small_model(), b = small_model();
    const TrainingLog la = train_with_refinement(a, d, pairs, cfg);
    const TrainingLog lb = train(b, d, pairs, cfg);
    CHECK(a.net.same_parameters(b.net));
    REQUIRE(la.epochs.size() == lb.epochs.size() + 1);
    for (std::size_t e = 0; e < lb.epochs.size(); ++e) {
      CHECK(la.epochs[e].train_loss == lb.epochs[e].train_loss);
      CHECK(la.epochs[e].val_loss == lb.epochs[e].val_loss);
    }
    CHECK(la.epochs.back().phase == "refine-1");
    CHECK(la.epochs.back().val_loss == lb.epochs.back().val_loss);
  }
  SUBCASE("max_epochs 0 leaves the model untouched") {
    cfg.max_epochs = 0;
    SimNetModel m = small_model();
    const auto before = m.net;
    CHECK(train_with_refinement(m, d, cfg).empty());
    CHECK(m.net.same_parameters(before));
  }
  SUBCASE("reproducible") {
    SimNetModel a = small_model(), b = small_model();
    train_with_refinement(a, d, cfg);
    train_with_refinement(b, d, cfg);
    CHECK(a.net.same_parameters(b.net));
  }
}

TEST_CASE("training log JSONL") {
  TrainingLog log;
  log.epochs = {{0, "base", 0.5, 0.25}, {1, "refine-1", 0.125, 0.0625}};
  std::istringstream in(log.to_jsonl());
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 2);
  CHECK(rows[1]["epoch"] == 1);
  CHECK(rows[1]["phase"] == "refine-1");
  CHECK(rows[0]["train_loss"] == 0.5);
  CHECK(rows[0]["val_loss"] == 0.25);
  TrainingLog more;
  more.append(log);
  more.append(log);
  CHECK(more.epochs.size() == 4);
  CHECK(more.phases().size() == 2);
}

TEST_CASE("end-to-end training") {
  SynthSpec spec;
  spec.n_classes = 4;
  spec.per_class_count = 20;
  spec.dim = 12;
  const Dataset raw = generate_synthetic(spec).dataset;
  EndToEndConfig cfg;
  cfg.frozen = small_config();
  cfg.frozen.max_epochs = 3;
  cfg.frozen.pair_count = 600;
  cfg.joint_optimizer.learning_rate = 0.005;
  cfg.joint_max_epochs = 3;
  const auto make_encoder = [] { return nn::Network::build(12, std::vector<std::size_t>{16}, 8, 3); };

  SUBCASE("both phases run and the encoder changes") {
    nn::Network enc = make_encoder();
    const nn::Network before = enc;
    SimNetModel m = small_model(8);
    const TrainingLog log = train_end_to_end(enc, m, raw, cfg);
    CHECK(log.phases() == std::vector<std::string>{"frozen", "joint"});
    CHECK_FALSE(enc.same_parameters(before));
    CHECK(enc.all_finite());
  }
  SUBCASE("a zero joint learning rate leaves the encoder unchanged") {
    cfg.joint_optimizer.learning_rate = 0.0;
    nn::Network enc = make_encoder();
    const nn::Network before = enc;
    SimNetModel m = small_model(8);
    train_end_to_end(enc, m, raw, cfg);
    CHECK(enc.same_parameters(before));
  }
  SUBCASE("reproducible") {
    nn::Network e1 = make_encoder(), e2 = make_encoder();
    SimNetModel m1 = small_model(8), m2 = small_model(8);
    train_end_to_end(e1, m1, raw, cfg);
    train_end_to_end(e2, m2, raw, cfg);
    CHECK(e1.same_parameters(e2));
    CHECK(m1.net.same_parameters(m2.net));
  }
  SUBCASE("dimension mismatches") {
    nn::Network enc = make_encoder();
    SimNetModel m = small_model(10);
    CHECK_THROWS_AS(train_end_to_end(enc, m, raw, cfg), DimensionError);
    nn::Network wrong_in = nn::Network::build(5, std::vector<std::size_t>{}, 8, 0);
    SimNetModel m8 = small_model(8);
    CHECK_THROWS_AS(train_end_to_end(wrong_in, m8, raw, cfg), DimensionError);
  }
  SUBCASE("encode_dataset keeps labels, ids and queries") {
    const nn::Network enc = make_encoder();
    const Dataset e = encode_dataset(enc, raw);
    CHECK(e.dim() == 8);
    CHECK(e.labels == raw.labels);
    CHECK(e.ids == raw.ids);
    CHECK(e.query_indices == raw.query_indices);
  }
}

TEST_CASE("a single pair can be memorized") {
  const Dataset d = small_synth();
  SimNetModel m = small_model();
  const PairBatch one{sample_balanced_pairs(d, 2, 3).front()};
  TrainConfig cfg = small_config();
  cfg.max_epochs = 3000;
  cfg.convergence.patience = 3000;
  cfg.optimizer.learning_rate = 1e-4;
  cfg.optimizer.weight_decay = 0.0;
  train(m, d, one, cfg);
  CHECK(mean_pair_loss(m, d, one, cfg.margin) < 1e-3);
}

TEST_CASE("a one-class dataset cannot be trained on") {
  Dataset d = small_synth();
  std::fill(d.labels.begin(), d.labels.end(), 0);
  PairBatch pairs;
  for (std::size_t i = 0; i + 1 < 40; i += 2) {
    pairs.push_back({i, i + 1, PairLabel::Similar, cosine_similarity(d.feature(i), d.feature(i + 1))});
  }
  SimNetModel m = small_model();
  CHECK_THROWS_AS(train(m, d, pairs, small_config()), TrainingError);
}

TEST_CASE("a constant-zero model mines matches with positive cosine and non-matches with negative") {
  const Dataset d = small_synth(3);
  SimNetModel m = small_model();
  auto& last = m.net.mutable_layer(m.net.layer_count() - 1);
  last.weights.fill(0.0);
  last.bias[0] = 0.0;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < d.size(); i += 2) pool.push_back(i);
  std::set<std::tuple<std::size_t, std::size_t>> expected, got;
  for (std::size_t a : pool) {
    for (std::size_t b : pool) {
      if (a == b) continue;
      const double c = cosine_similarity(d.feature(a), d.feature(b));
      if (d.labels[a] == d.labels[b] ? c > 0.0 : c < 0.0) expected.insert({a, b});
    }
  }
  for (const auto& p : mine_difficult_pairs(m, d, pool)) got.insert({p.i, p.j});
  CHECK(!expected.empty());
  CHECK(got == expected);
}
