// Trainer tests: config contract, early stopping, optimizer behavior,
// training smoke properties, and the evaluation entry points.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "snn/data.hpp"
#include "snn/network.hpp"
#include "snn/rng.hpp"
#include "snn/synth.hpp"
#include "snn/tensor.hpp"
#include "snn/trainer.hpp"

namespace fs = std::filesystem;
using snn::Backbone;
using snn::Dataset;
using snn::EarlyStopMonitor;
using snn::ModelParams;
using snn::PairSample;
using snn::Partition;
using snn::Rng;
using snn::Scope;
using snn::SplitManifest;
using snn::SplitParams;
using snn::Tensor;
using snn::TrainConfig;
using snn::TrainResult;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny rendered corpus for integration runs: 3 training species plus one
// holdout, 24 samples each at 16x16.
struct Corpus {
  fs::path dir;
  Dataset ds;
  SplitManifest split;
};

Corpus make_corpus(const std::string& name, uint64_t seed, uint32_t n_unseen = 1) {
  const fs::path dir = temp_dir(name);
  snn::SynthParams sp;
  sp.n_seen = 3;
  sp.n_unseen = n_unseen;
  sp.samples_per_species = 24;
  sp.resolution = 16;
  sp.seed = seed;
  sp.out_dir = dir.string();
  snn::SynthResult r = snn::synth_generate(sp);
  Dataset ds = Dataset::load_manifest(r.manifest_path);
  SplitParams params;
  params.min_count = 1;
  params.unseen_prefix = snn::kSynthUnseenPrefix;
  params.seed = seed;
  SplitManifest split = snn::make_split(ds, params);
  return {dir, std::move(ds), std::move(split)};
}

TrainConfig quick_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.input_size = 16;
  cfg.max_epochs = 2;
  cfg.batch_size = 16;
  cfg.pairs_per_epoch = 32;
  cfg.val_pairs = 16;
  cfg.seed = seed;
  return cfg;
}

bool params_bit_identical(const ModelParams& a, const ModelParams& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& ta = *a.tensors[i].value;
    const auto& tb = *b.tensors[i].value;
    if (a.tensors[i].name != b.tensors[i].name) return false;
    if (ta.shape() != tb.shape()) return false;
    for (size_t j = 0; j < ta.size(); ++j)
      if (ta[j] != tb[j]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config: frozen defaults") {
  TrainConfig cfg;
  CHECK(cfg.max_epochs == 100);
  CHECK(cfg.patience == 7);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.999);
  CHECK(cfg.epsilon == 1e-8);
  CHECK(cfg.margin == 1.0);
  CHECK(cfg.pos_ratio == 0.5);
  CHECK(cfg.normalize);
  CHECK_NOTHROW(snn::validate_config(cfg));
}

TEST_CASE("config: invalid fields are rejected") {
  TrainConfig cfg;
  cfg.max_epochs = 0;
  CHECK_THROWS(snn::validate_config(cfg));
  cfg = TrainConfig{};
  cfg.patience = 0;
  CHECK_THROWS(snn::validate_config(cfg));
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS(snn::validate_config(cfg));
  cfg = TrainConfig{};
  cfg.margin = 0.0;
  CHECK_THROWS(snn::validate_config(cfg));
  cfg = TrainConfig{};
  cfg.dropout = 1.0;
  CHECK_THROWS(snn::validate_config(cfg));
  cfg = TrainConfig{};
  cfg.pos_ratio = 1.5;
  CHECK_THROWS(snn::validate_config(cfg));
}

TEST_CASE("early stopping: improving losses never trip the monitor") {
  EarlyStopMonitor monitor(7);
  for (int epoch = 1; epoch <= 100; ++epoch) {
    CHECK(monitor.observe(1.0 / epoch));  // strictly improving
    CHECK_FALSE(monitor.should_stop());
    CHECK(monitor.stale() == 0);
  }
  CHECK(monitor.best_epoch() == 100);
}

TEST_CASE("early stopping: frozen loss stops after best epoch + patience") {
  // Improvement on epochs 1..3, frozen afterwards: with patience 7 the run
  // must stop after epoch 10 and remember epoch 3 as best.
  EarlyStopMonitor monitor(7);
  int epochs_run = 0;
  for (int epoch = 1; epoch <= 100; ++epoch) {
    const double val = epoch <= 3 ? 1.0 / epoch : 1.0 / 3.0;
    monitor.observe(val);
    epochs_run = epoch;
    if (monitor.should_stop()) break;
  }
  CHECK(epochs_run == 10);
  CHECK(monitor.best_epoch() == 3);
  CHECK(monitor.best() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("early stopping: equal loss does not count as improvement") {
  EarlyStopMonitor monitor(2);
  CHECK(monitor.observe(0.5));
  CHECK_FALSE(monitor.observe(0.5));  // tie is not strict improvement
  CHECK_FALSE(monitor.observe(0.5));
  CHECK(monitor.should_stop());
  CHECK(monitor.best_epoch() == 1);
}

TEST_CASE("train: learning rate 0 leaves parameters bit-identical") {
  Corpus c = make_corpus("snn_trainer_lr0", 21);
  TrainConfig cfg = quick_config(33);
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 1;
  TrainResult one = snn::train(c.ds, c.split, cfg);
  cfg.max_epochs = 3;
  cfg.patience = 3;
  TrainResult three = snn::train(c.ds, c.split, cfg);
  // Same seeded init and no movement: any number of epochs returns the same
  // parameters, bit for bit.
  CHECK(params_bit_identical(one.params, three.params));

  // A real learning rate must move every parameter tensor: the gradient
  // reaches each of them, and one Adam step shifts any coordinate with a
  // nonzero gradient.
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 1;
  cfg.patience = 7;
  TrainResult moved = snn::train(c.ds, c.split, cfg);
  REQUIRE(moved.params.tensors.size() == one.params.tensors.size());
  for (size_t i = 0; i < moved.params.tensors.size(); ++i) {
    const auto& before = *one.params.tensors[i].value;
    const auto& after = *moved.params.tensors[i].value;
    bool changed = false;
    for (size_t j = 0; j < before.size() && !changed; ++j)
      changed = before[j] != after[j];
    INFO("tensor ", moved.params.tensors[i].name);
    CHECK(changed);
  }
  fs::remove_all(c.dir);
}

TEST_CASE("train: log is consistent with the early-stopping contract") {
  Corpus c = make_corpus("snn_trainer_log", 22);
  TrainConfig cfg = quick_config(5);
  cfg.max_epochs = 8;
  cfg.patience = 2;
  TrainResult r = snn::train(c.ds, c.split, cfg);
  REQUIRE(!r.log.epochs.empty());
  CHECK(r.log.epochs.size() <= 8);

  // best_epoch/best_val_loss match the recorded minimum; the stale counter
  // resets exactly on strict improvement.
  double best = std::numeric_limits<double>::infinity();
  uint32_t best_epoch = 0;
  for (const auto& e : r.log.epochs) {
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
      CHECK(e.stale_epochs == 0);
    } else {
      CHECK(e.stale_epochs > 0);
    }
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.val_f1 >= 0.0);
    CHECK(e.val_f1 <= 1.0);
  }
  CHECK(r.log.best_epoch == best_epoch);
  CHECK(r.log.best_val_loss == doctest::Approx(best));
  // If the run stopped early, the tail epochs exhaust the patience budget.
  if (r.log.epochs.size() < cfg.max_epochs)
    CHECK(r.log.epochs.back().stale_epochs == cfg.patience);

  // Parameter storage is a single copy: unique names, unique tensors.
  std::set<std::string> names;
  std::set<const void*> ptrs;
  for (const auto& t : r.params.tensors) {
    CHECK(names.insert(t.name).second);
    CHECK(ptrs.insert(t.value.get()).second);
  }
  CHECK(r.params.tensors.size() == 8);
  fs::remove_all(c.dir);
}

TEST_CASE("train: identical runs produce identical logs and parameters") {
  Corpus c = make_corpus("snn_trainer_det", 23);
  TrainConfig cfg = quick_config(77);
  TrainResult a = snn::train(c.ds, c.split, cfg);
  TrainResult b = snn::train(c.ds, c.split, cfg);
  CHECK(params_bit_identical(a.params, b.params));
  REQUIRE(a.log.epochs.size() == b.log.epochs.size());
  for (size_t i = 0; i < a.log.epochs.size(); ++i) {
    CHECK(a.log.epochs[i].train_loss == b.log.epochs[i].train_loss);
    CHECK(a.log.epochs[i].val_loss == b.log.epochs[i].val_loss);
  }
  fs::remove_all(c.dir);
}

TEST_CASE("train: non-finite loss aborts with a diagnostic naming the batch") {
  Corpus c = make_corpus("snn_trainer_blowup", 24);
  TrainConfig cfg = quick_config(9);
  // An absurd step size swells the weights until a float32 forward pass
  // overflows; the run must abort rather than continue on garbage.
  cfg.learning_rate = 1e18;
  cfg.normalize = false;
  cfg.max_epochs = 20;
  CHECK_THROWS_WITH(snn::train(c.ds, c.split, cfg), doctest::Contains("batch"));
  fs::remove_all(c.dir);
}

TEST_CASE("train: identical similar-only pairs drive the loss toward zero") {
  // Every sample is the same image (spread over two species to satisfy the
  // pair sampler's scope precondition), and pos_ratio = 1 draws only similar
  // pairs: distances come from dropout noise alone, so the mean train loss
  // must fall toward 0 over 50 epochs.
  const fs::path dir = temp_dir("snn_trainer_monotone");
  fs::create_directories(dir / "images");
  Rng rng(31);
  Tensor img({16, 16, 3});
  for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform_float(0.0f, 1.0f);
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "id,species,path\n";
  for (int i = 0; i < 40; ++i) {
    const std::string rel = "images/s" + std::to_string(i) + ".png";
    snn::encode_png((dir / rel).string(), img);
    manifest << "s" << i << "," << (i % 2 == 0 ? "twin_a" : "twin_b") << "," << rel
             << "\n";
  }
  manifest.close();
  Dataset ds = Dataset::load_manifest((dir / "manifest.csv").string());
  SplitParams sparams;
  sparams.min_count = 1;
  sparams.seed = 1;
  SplitManifest split = snn::make_split(ds, sparams);

  TrainConfig cfg;
  cfg.input_size = 16;
  cfg.max_epochs = 50;
  cfg.patience = 50;  // let all 50 epochs run
  cfg.batch_size = 8;
  cfg.pairs_per_epoch = 16;
  cfg.val_pairs = 6;
  cfg.pos_ratio = 1.0;   // only similar pairs; all images are identical
  cfg.seed = 4;
  TrainResult r = snn::train(ds, split, cfg);
  REQUIRE(r.log.epochs.size() == 50);

  auto mean_loss = [&](size_t from, size_t to) {
    double s = 0;
    for (size_t i = from; i < to; ++i) s += r.log.epochs[i].train_loss;
    return s / static_cast<double>(to - from);
  };
  const double head = mean_loss(0, 5);
  const double tail = mean_loss(45, 50);
  CHECK(tail < head);          // downward trend despite dropout noise
  CHECK(tail < 0.5 * head);    // and substantially so
  fs::remove_all(dir);
}

TEST_CASE("evaluate: constant embedder scores 0.5 on balanced pairs") {
  Corpus c = make_corpus("snn_trainer_constmodel", 25);
  // Zero every parameter: embeddings collapse to the zero vector, every
  // distance is 0, every pair is predicted similar.
  Rng rng(1);
  ModelParams p = snn::init_model<float>(Backbone::kBuiltin, 16, 3, 0, true, 0.2, rng);
  for (auto& t : p.tensors)
    for (size_t i = 0; i < t.value->size(); ++i) (*t.value)[i] = 0.0f;

  const auto pairs = snn::sample_pairs(c.ds, c.split, Partition::kTest, Scope::kAll,
                                       60, 0.5, 11);
  const snn::EvalOutcome out = snn::evaluate_model(p, c.ds, nullptr, pairs, 0.5);
  for (double s : out.scores) CHECK(s == 0.0);
  CHECK(out.report.accuracy == 0.5);
  CHECK(out.report.cm.tp == 30);
  CHECK(out.report.cm.fp == 30);
  fs::remove_all(c.dir);
}

TEST_CASE("evaluate: deterministic and strict about unknown ids") {
  Corpus c = make_corpus("snn_trainer_evaldet", 26);
  Rng rng(2);
  ModelParams p = snn::init_model<float>(Backbone::kBuiltin, 16, 3, 0, true, 0.2, rng);
  const auto pairs = snn::sample_pairs(c.ds, c.split, Partition::kTest, Scope::kAll,
                                       40, 0.5, 13);
  const snn::EvalOutcome a = snn::evaluate_model(p, c.ds, nullptr, pairs, 0.5);
  const snn::EvalOutcome b = snn::evaluate_model(p, c.ds, nullptr, pairs, 0.5);
  REQUIRE(a.scores.size() == b.scores.size());
  for (size_t i = 0; i < a.scores.size(); ++i) CHECK(a.scores[i] == b.scores[i]);
  CHECK(a.report.macro_f1 == b.report.macro_f1);

  std::vector<PairSample> ghost = pairs;
  ghost[0].id_a = "no_such_sample";
  CHECK_THROWS(snn::evaluate_model(p, c.ds, nullptr, ghost, 0.5));
  fs::remove_all(c.dir);
}

TEST_CASE("protocols: three scope reports from one model") {
  Corpus c = make_corpus("snn_trainer_protocols", 27, /*n_unseen=*/2);
  Rng rng(3);
  ModelParams p = snn::init_model<float>(Backbone::kBuiltin, 16, 3, 0, true, 0.2, rng);
  const snn::ProtocolReports reports =
      snn::evaluate_protocols(p, c.ds, c.split, nullptr, 24, 0.5, 17);
  for (const auto* r : {&reports.seen, &reports.unseen, &reports.all}) {
    CHECK(r->cm.total() == 24);
    CHECK(r->threshold == 0.5);
    CHECK(r->cm.tp + r->cm.fn == 12);  // balanced draw
  }
  fs::remove_all(c.dir);
}

TEST_CASE("protocols: a single unseen species cannot form negative pairs") {
  // evaluate_protocols draws balanced pairs per scope; with exactly one
  // unseen species the unseen scope has no dissimilar pairs and must error.
  Corpus c = make_corpus("snn_trainer_oneunseen", 28);  // n_unseen = 1
  Rng rng(4);
  ModelParams p = snn::init_model<float>(Backbone::kBuiltin, 16, 3, 0, true, 0.2, rng);
  CHECK_THROWS(snn::evaluate_protocols(p, c.ds, c.split, nullptr, 40, 0.5, 19));
  fs::remove_all(c.dir);
}

TEST_CASE("train log: persisted as the documented CSV") {
  snn::TrainLog log;
  log.epochs.push_back({1, 0.5, 0.4, 0.6, 0});
  log.epochs.push_back({2, 0.3, 0.35, 0.7, 1});
  log.best_epoch = 1;
  log.best_val_loss = 0.4;
  const std::string path =
      (fs::temp_directory_path() / "snn_trainer_log.csv").string();
  snn::save_train_log(log, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,train_loss,val_loss,val_f1,stale_epochs");
  std::string row;
  int rows = 0;
  while (std::getline(in, row))
    if (!row.empty()) ++rows;
  CHECK(rows == 2);
  std::remove(path.c_str());
}
