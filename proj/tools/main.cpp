// simnet: generate, warm up, train, mine, evaluate and compare similarity functions.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "manifest.hpp"
#include "simnet/baselines.hpp"
#include "simnet/error.hpp"
#include "simnet/io.hpp"
#include "simnet/model.hpp"
#include "simnet/retrieval.hpp"
#include "simnet/synth.hpp"
#include "simnet/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace simnet::cli {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("SIMNET_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("SIMNET_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

fs::path sibling(const fs::path& p, const char* suffix) {
  auto out = p;
  out += suffix;
  return out;
}

json to_json(const nn::OptimizerConfig& o) {
  return {{"learning_rate", o.learning_rate}, {"batch_size", o.batch_size},
          {"weight_decay", o.weight_decay},   {"momentum", o.momentum},
          {"seed", o.seed}};
}

json to_json(const TrainConfig& c) {
  return {{"margin", c.margin},
          {"optimizer", to_json(c.optimizer)},
          {"max_epochs", c.max_epochs},
          {"patience", c.convergence.patience},
          {"min_delta", c.convergence.min_delta},
          {"mined_fraction_cap", c.mined_fraction_cap},
          {"val_fraction", c.val_fraction},
          {"pair_count", c.pair_count},
          {"candidate_pool_size", c.candidate_pool_size},
          {"refinement_rounds", c.refinement_rounds}};
}

json to_json(const ArchConfig& a) {
  return {{"preset", std::string(to_string(a.preset))},
          {"hidden_dims", a.hidden_dims},
          {"scaled_hidden_dims", a.scaled_hidden_dims()},
          {"feature_dim", a.feature_dim},
          {"width_scale", a.width_scale}};
}

void add_optimizer_options(CLI::App* cmd, nn::OptimizerConfig& o) {
  cmd->add_option("--lr", o.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--batch", o.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--weight-decay", o.weight_decay, "L2 weight decay")->capture_default_str();
  cmd->add_option("--momentum", o.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
}

template <typename F>
auto usage_checked(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

// ---- gen ----

struct GenArgs {
  SynthSpec spec;
  fs::path out;
};

int cmd_gen(const GenArgs& a) {
  usage_checked([&] { a.spec.validate(); });
  const SynthResult r = generate_synthetic(a.spec);
  write_feature_store(a.out, r.dataset);
  const std::string summary = r.metadata.summary(a.spec);
  const fs::path summary_path = sibling(a.out, ".summary.txt");
  write_text(summary_path, summary);
  std::cout << summary;
  std::cout << "wrote " << a.out.string() << " (" << r.dataset.size() << " records)\n";

  Manifest m("gen");
  m.config() = {{"n_classes", a.spec.n_classes},
                {"per_class_count", a.spec.per_class_count},
                {"dim", a.spec.dim},
                {"noise", a.spec.noise},
                {"bridge_fraction", a.spec.bridge_fraction},
                {"query_fraction", a.spec.query_fraction},
                {"violation_margin", a.spec.violation_margin}};
  m.seed("generator", a.spec.seed);
  m.output("store", a.out);
  if (fs::exists(sibling(a.out, ".ids"))) m.output("ids", sibling(a.out, ".ids"));
  if (fs::exists(sibling(a.out, ".queries"))) m.output("queries", sibling(a.out, ".queries"));
  m.output("summary", summary_path);
  m.write(manifest_path_for(a.out));
  return 0;
}

// ---- warmup ----

struct WarmupArgs {
  std::string arch = "B";
  double scale = 0.125;
  std::size_t dim = 64;
  WarmupConfig cfg;
  fs::path out;
};

int cmd_warmup(WarmupArgs a) {
  const ArchConfig arch = usage_checked([&] {
    a.cfg.optimizer.validate();
    return ArchConfig::from_preset(parse_arch_preset(a.arch), a.dim, a.scale);
  });
  a.cfg.seed = a.cfg.optimizer.seed;
  SimNetModel model = build_model(arch, a.cfg.seed);
  const WarmupReport r = warmup(model, a.cfg);
  std::printf("warm-up %s x%g, K=%zu: %zu training pairs\n", a.arch.c_str(), a.scale, a.dim,
              r.pairs_trained);
  std::printf("held-out pairs: %zu\ninitial MSE: %.6g\nMSE: %.6g\nrho: %.6f\n", r.pairs_validated,
              r.initial_mse, r.mse, r.correlation_rho);
  save_checkpoint(a.out, model);

  Manifest m("warmup");
  m.config() = {{"arch", to_json(arch)},
                {"train_pairs", a.cfg.train_pairs},
                {"val_pairs", a.cfg.val_pairs},
                {"check_interval_pairs", a.cfg.check_interval_pairs},
                {"optimizer", to_json(a.cfg.optimizer)}};
  m.seed("warmup", a.cfg.seed);
  m.output("checkpoint", a.out);
  m.write(manifest_path_for(a.out));
  return 0;
}

// ---- train ----

struct TrainArgs {
  fs::path store;
  fs::path model_in;
  std::string kind = "simnet";
  std::optional<double> delta;
  bool refine = false;
  std::string arch = "B";
  double scale = 0.125;
  TrainConfig cfg;
  fs::path out;
  fs::path log;
};

Dataset load_store(const fs::path& path) {
  Dataset d = read_feature_store(path);
  if (d.query_indices.empty()) {
    d.query_indices.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) d.query_indices[i] = i;
  }
  return d;
}

int cmd_train(TrainArgs a) {
  if (a.kind != "simnet" && a.kind != "linear") {
    throw UsageError("--kind must be simnet or linear, got '" + a.kind + "'");
  }
  if (a.refine && a.kind == "linear") throw UsageError("--refine applies to simnet models only");
  a.cfg.margin = a.delta.value_or(a.kind == "linear" ? linear_train_config().margin
                                  : a.refine         ? 0.8
                                                     : 0.2);
  usage_checked([&] { a.cfg.validate(); });

  // Training pairs come from non-query items only; without a query sidecar
  // every item is a query, so fall back to all items.
  Dataset ds = read_feature_store(a.store);
  std::vector<std::size_t> eligible = ds.training_indices();
  const PairBatch pairs = sample_balanced_pairs(ds, a.cfg.pair_count, a.cfg.optimizer.seed, eligible);

  Manifest m("train");
  m.input("store", a.store);
  TrainingLog log;
  if (a.kind == "linear") {
    LinearModel model = make_linear_model(ds.dim(), a.cfg.optimizer.seed);
    if (!a.model_in.empty()) {
      model = load_linear(a.model_in);
      m.input("model", a.model_in);
    }
    log = train_linear(model, ds, pairs, a.cfg);
    save_checkpoint(a.out, model);
  } else {
    SimNetModel model;
    if (!a.model_in.empty()) {
      model = load_simnet(a.model_in);
      m.input("model", a.model_in);
    } else {
      model = build_model(usage_checked([&] {
        return ArchConfig::from_preset(parse_arch_preset(a.arch), ds.dim(), a.scale);
      }), a.cfg.optimizer.seed);
      m.config()["arch"] = to_json(model.arch);
    }
    if (model.feature_dim() != ds.dim()) {
      throw DimensionError("store " + a.store.string() + " vs model", model.feature_dim(), ds.dim());
    }
    log = a.refine ? train_with_refinement(model, ds, pairs, a.cfg) : train(model, ds, pairs, a.cfg);
    save_checkpoint(a.out, model);
  }

  const fs::path log_path = a.log.empty() ? sibling(a.out, ".log.jsonl") : a.log;
  write_text(log_path, log.to_jsonl());
  for (const auto& e : log.epochs) {
    std::printf("epoch %3zu  %-10s train %.6f  val %.6f\n", e.epoch, e.phase.c_str(), e.train_loss,
                e.val_loss);
  }
  std::printf("wrote %s (%zu epochs)\n", a.out.string().c_str(), log.epochs.size());

  m.config()["kind"] = a.kind;
  m.config()["refine"] = a.refine;
  m.config()["train"] = to_json(a.cfg);
  m.seed("pairs", a.cfg.optimizer.seed);
  m.seed("optimizer", a.cfg.optimizer.seed);
  m.output("checkpoint", a.out);
  m.output("log", log_path);
  m.write(manifest_path_for(a.out));
  return 0;
}

// ---- mine ----

struct MineArgs {
  fs::path store;
  fs::path model;
  std::size_t pool = 200;
  std::uint64_t seed = 0;
  fs::path out;
};

int cmd_mine(const MineArgs& a) {
  if (a.pool < 2) throw UsageError("--pool must be at least 2");
  const Dataset ds = read_feature_store(a.store);
  const SimNetModel model = load_simnet(a.model);
  if (model.feature_dim() != ds.dim()) {
    throw DimensionError("store " + a.store.string() + " vs model", model.feature_dim(), ds.dim());
  }
  const PairBatch mined = mine_difficult_pairs(model, ds, a.pool, a.seed);
  std::string text;
  for (const auto& p : mined) {
    json j = {{"i", p.i},
              {"j", p.j},
              {"id_i", ds.ids[p.i]},
              {"id_j", ds.ids[p.j]},
              {"similar", p.label == PairLabel::Similar},
              {"cosine", p.baseline_sim}};
    text += j.dump() + "\n";
  }
  std::printf("%zu difficult pairs from a pool of %zu items\n", mined.size(),
              std::min(a.pool, ds.training_indices().size()));
  if (!a.out.empty()) {
    write_text(a.out, text);
    Manifest m("mine");
    m.config() = {{"pool", a.pool}};
    m.seed("pool", a.seed);
    m.input("store", a.store);
    m.input("model", a.model);
    m.output("pairs", a.out);
    m.write(manifest_path_for(a.out));
  }
  return 0;
}

// ---- eval / compare ----

Scorer make_scorer(const std::string& spec, std::size_t dim) {
  if (spec == "cosine") return cosine_scorer();
  if (spec == "euclid") return euclid_scorer();
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  if (colon == std::string::npos || colon + 1 == spec.size() || (kind != "linear" && kind != "simnet")) {
    throw UsageError("unknown scorer '" + spec + "' (expected cosine, euclid, linear:PATH or simnet:PATH)");
  }
  const fs::path path = spec.substr(colon + 1);
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path.string());
  auto check_dim = [&](std::size_t model_dim) {
    if (model_dim != dim) throw DimensionError("scorer " + spec + " vs store", model_dim, dim);
  };
  if (kind == "linear") {
    LinearModel m = load_linear(path);
    check_dim(m.feature_dim());
    return linear_scorer(std::move(m), spec);
  }
  AnyModel any = load_checkpoint(path);
  if (auto* s = std::get_if<SimNetModel>(&any)) {
    check_dim(s->feature_dim());
    return simnet_scorer(std::move(*s), spec);
  }
  if (auto* e = std::get_if<EncoderSimNet>(&any)) {
    check_dim(e->encoder.input_dim());
    auto shared = std::make_shared<const EncoderSimNet>(std::move(*e));
    return Scorer(spec, [shared](std::span<const double> q, std::span<const double> x) {
      const auto fq = nn::forward(shared->encoder, q).output;
      const auto fx = nn::forward(shared->encoder, x).output;
      return score_pair(shared->model, fq, fx);
    });
  }
  throw Error(path.string() + " holds a linear model; use linear:" + path.string());
}

struct EvalArgs {
  fs::path store;
  std::vector<std::string> scorers;
  fs::path report;
  std::size_t threads = 1;
};

int run_eval(const EvalArgs& a, bool compare) {
  const Dataset ds = load_store(a.store);
  std::vector<Scorer> scorers;
  for (const auto& s : a.scorers) scorers.push_back(make_scorer(s, ds.dim()));
  std::vector<EvalReport> reports;
  for (const auto& s : scorers) reports.push_back(mean_average_precision(s, ds, a.threads));

  if (compare) {
    std::cout << comparison_table(reports);
  } else {
    std::cout << reports.front().to_table();
  }
  if (!a.report.empty()) {
    std::string text;
    for (const auto& r : reports) text += r.to_jsonl();
    write_text(a.report, text);
    Manifest m(compare ? "compare" : "eval");
    m.config() = {{"scorers", a.scorers}, {"queries", ds.query_indices.size()}};
    m.input("store", a.store);
    for (const auto& s : a.scorers) {
      const auto colon = s.find(':');
      if (colon != std::string::npos) m.input(s, s.substr(colon + 1));
    }
    // The report's summary rows carry a "timing_seconds" field; it is the only
    // part of the report that varies between identical runs.
    m.output("report", a.report);
    m.write(manifest_path_for(a.report));
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Learned non-metric similarity functions for retrieval"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Evaluation threads (default: $SIMNET_THREADS or all cores)");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic non-metric feature store");
  g->add_option("--out", gen.out, "Output store path")->required();
  g->add_option("--classes", gen.spec.n_classes, "Number of base classes")->capture_default_str();
  g->add_option("--per-class", gen.spec.per_class_count, "Items per class slot")->capture_default_str();
  g->add_option("--dim", gen.spec.dim, "Feature dimension K")->capture_default_str();
  g->add_option("--noise", gen.spec.noise, "Per-component noise sigma")->capture_default_str();
  g->add_option("--bridge", gen.spec.bridge_fraction, "Share of bridge items per class slot")
      ->capture_default_str();
  g->add_option("--queries", gen.spec.query_fraction, "Share of items used as queries")
      ->capture_default_str();
  g->add_option("--violation-margin", gen.spec.violation_margin, "Margin for the triangle scan")
      ->capture_default_str();
  g->add_option("--seed", gen.spec.seed, "Random seed")->capture_default_str();

  WarmupArgs wu;
  auto* w = app.add_subcommand("warmup", "Pre-train a similarity network to imitate cosine");
  w->add_option("--arch", wu.arch, "Architecture preset A, B, C or D")->capture_default_str();
  w->add_option("--scale", wu.scale, "Hidden width multiplier")->capture_default_str();
  w->add_option("--dim", wu.dim, "Feature dimension K")->capture_default_str();
  w->add_option("--pairs", wu.cfg.train_pairs, "Training pairs")->capture_default_str();
  w->add_option("--val-pairs", wu.cfg.val_pairs, "Held-out pairs")->capture_default_str();
  w->add_option("--check-interval", wu.cfg.check_interval_pairs, "Pairs between divergence checks")
      ->capture_default_str();
  add_optimizer_options(w, wu.cfg.optimizer);
  w->add_option("--out", wu.out, "Output checkpoint")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a similarity network or the linear baseline");
  t->add_option("--store", tr.store, "Feature store")->required()->check(CLI::ExistingFile);
  t->add_option("--model-in", tr.model_in, "Starting checkpoint (e.g. from warmup)")
      ->check(CLI::ExistingFile);
  t->add_option("--kind", tr.kind, "simnet or linear")->capture_default_str();
  t->add_option("--delta", tr.delta, "Margin (default 0.8 with --refine, else 0.2)");
  t->add_flag("--refine", tr.refine, "Mine difficult pairs and retrain");
  t->add_option("--arch", tr.arch, "Preset when no --model-in is given")->capture_default_str();
  t->add_option("--scale", tr.scale, "Hidden width multiplier when no --model-in is given")
      ->capture_default_str();
  t->add_option("--pairs", tr.cfg.pair_count, "Balanced training pairs")->capture_default_str();
  t->add_option("--pool", tr.cfg.candidate_pool_size, "Mining candidate pool size")
      ->capture_default_str();
  t->add_option("--rounds", tr.cfg.refinement_rounds, "Refinement rounds")->capture_default_str();
  t->add_option("--cap", tr.cfg.mined_fraction_cap, "Max share of mined pairs per batch")
      ->capture_default_str();
  t->add_option("--max-epochs", tr.cfg.max_epochs, "Epoch limit per phase")->capture_default_str();
  t->add_option("--patience", tr.cfg.convergence.patience, "Epochs without improvement")
      ->capture_default_str();
  t->add_option("--min-delta", tr.cfg.convergence.min_delta, "Minimum val-loss improvement")
      ->capture_default_str();
  t->add_option("--val-fraction", tr.cfg.val_fraction, "Held-out share of pairs")
      ->capture_default_str();
  add_optimizer_options(t, tr.cfg.optimizer);
  t->add_option("--out", tr.out, "Output checkpoint")->required();
  t->add_option("--log", tr.log, "Training log (default: <out>.log.jsonl)");

  MineArgs mi;
  auto* mc = app.add_subcommand("mine", "List pairs where a model does worse than cosine");
  mc->add_option("--store", mi.store, "Feature store")->required()->check(CLI::ExistingFile);
  mc->add_option("--model", mi.model, "Similarity network checkpoint")->required()
      ->check(CLI::ExistingFile);
  mc->add_option("--pool", mi.pool, "Candidate pool size")->capture_default_str();
  mc->add_option("--seed", mi.seed, "Pool sampling seed")->capture_default_str();
  mc->add_option("--out", mi.out, "Write mined pairs as JSON lines");

  EvalArgs ev;
  std::string scorer;
  auto* e = app.add_subcommand("eval", "Mean average precision of one scorer");
  e->add_option("--store", ev.store, "Feature store")->required()->check(CLI::ExistingFile);
  e->add_option("--scorer", scorer, "cosine | euclid | linear:PATH | simnet:PATH")->required();
  e->add_option("--report", ev.report, "Write per-query results as JSON lines");

  EvalArgs cmp;
  auto* c = app.add_subcommand("compare", "Mean average precision of several scorers");
  c->add_option("--store", cmp.store, "Feature store")->required()->check(CLI::ExistingFile);
  c->add_option("--scorers", cmp.scorers, "Comma-separated scorer list")->required()->delimiter(',');
  c->add_option("--report", cmp.report, "Write per-query results as JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }
  const std::size_t n_threads = threads > 0 ? threads : default_threads();

  if (g->parsed()) return cmd_gen(gen);
  if (w->parsed()) return cmd_warmup(wu);
  if (t->parsed()) return cmd_train(tr);
  if (mc->parsed()) return cmd_mine(mi);
  if (e->parsed()) {
    ev.scorers = {scorer};
    ev.threads = n_threads;
    return run_eval(ev, false);
  }
  cmp.threads = n_threads;
  return run_eval(cmp, true);
}

}  // namespace
}  // namespace simnet::cli

int main(int argc, char** argv) {
  try {
    return simnet::cli::run(argc, argv);
  } catch (const simnet::cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
