// Command-line front end for the Siamese verification library.
//
// Subcommands: synth, split, train, eval, sweep, pairmatrix, embed, gradcheck.
// Every failure path prints a single line "error: <message>" to stderr and
// exits nonzero. All commands are deterministic given identical inputs,
// seeds, and output paths.
//
// This translation unit talks to the library exclusively through the C API
// in snn.h.

#include "CLI11.hpp"
#include "snn.h"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

// ---- plumbing --------------------------------------------------------------

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_status(snn_status st) {
  if (st != SNN_OK) {
    const char* msg = snn_last_error();
    throw std::runtime_error(msg && *msg ? msg : snn_status_name(st));
  }
}

template <typename T, void (*Free)(T*)>
class Handle {
 public:
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : p_(o.p_) { o.p_ = nullptr; }
  Handle& operator=(Handle&& o) noexcept {
    if (this != &o) {
      reset();
      p_ = o.p_;
      o.p_ = nullptr;
    }
    return *this;
  }
  ~Handle() { reset(); }
  void reset() {
    if (p_) Free(p_);
    p_ = nullptr;
  }
  T** out() { return &p_; }
  T* get() const { return p_; }

 private:
  T* p_ = nullptr;
};

using DatasetH = Handle<snn_dataset, snn_dataset_close>;
using SplitH = Handle<snn_split, snn_split_free>;
using ModelH = Handle<snn_model, snn_model_free>;

DatasetH open_dataset(const std::string& manifest, const std::string& embeddings) {
  DatasetH ds;
  check_status(snn_dataset_open(manifest.c_str(), ds.out()));
  if (!embeddings.empty())
    check_status(snn_dataset_attach_embeddings(ds.get(), embeddings.c_str()));
  return ds;
}

SplitH load_split(const std::string& path) {
  SplitH sp;
  check_status(snn_split_load(path.c_str(), sp.out()));
  return sp;
}

ModelH load_model(const std::string& path) {
  ModelH m;
  check_status(snn_model_load(path.c_str(), m.out()));
  return m;
}

std::string fmt(double v, int places) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(places) << v;
  return os.str();
}

std::string metrics_row(const snn_metrics& m) {
  std::ostringstream os;
  os << "threshold=" << fmt(m.threshold, 2) << " precision=" << fmt(m.macro_precision, 4)
     << " recall=" << fmt(m.macro_recall, 4) << " f1=" << fmt(m.macro_f1, 4)
     << " accuracy=" << fmt(m.accuracy, 4);
  return os.str();
}

void write_confusion_csv(const snn_metrics& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("cannot open for writing: " + path);
  f << ",predicted_similar,predicted_dissimilar\n"
    << "actual_similar," << m.tp << "," << m.fn << "\n"
    << "actual_dissimilar," << m.fp << "," << m.tn << "\n";
  if (!f) fail("write failed: " + path);
}

// ---- config file -----------------------------------------------------------

const std::array<const char*, 12> kConfigKeys = {
    "margin",    "learning_rate", "batch_size", "epochs",
    "patience",  "input_size",    "normalize",  "backbone",
    "dropout",   "pos_ratio",     "pairs_per_epoch", "seed"};

bool known_config_key(const std::string& key) {
  for (const char* k : kConfigKeys)
    if (key == k) return true;
  return false;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// key = value lines; '#' starts a comment; unknown and duplicate keys rejected.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string s = trim(line);
    if (s.empty()) continue;
    const std::string at = path + " line " + std::to_string(lineno);
    size_t eq = s.find('=');
    if (eq == std::string::npos) fail("config " + at + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) fail("config " + at + ": missing key");
    if (!known_config_key(key)) fail("config " + at + ": unknown key '" + key + "'");
    if (value.empty()) fail("config " + at + ": empty value for '" + key + "'");
    if (out.count(key)) fail("config " + at + ": duplicate key '" + key + "'");
    out.emplace(std::move(key), std::move(value));
  }
  return out;
}

double parse_double_value(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    fail("config: " + key + " must be a number, got '" + v + "'");
  }
}

uint64_t parse_u64_value(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-')
    fail("config: " + key + " must be a non-negative integer, got '" + v + "'");
  try {
    size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<uint64_t>(n);
  } catch (const std::exception&) {
    fail("config: " + key + " must be a non-negative integer, got '" + v + "'");
  }
}

uint32_t parse_u32_value(const std::string& key, const std::string& v) {
  uint64_t n = parse_u64_value(key, v);
  if (n > UINT32_MAX) fail("config: " + key + " is out of range: '" + v + "'");
  return static_cast<uint32_t>(n);
}

int32_t parse_bool_value(const std::string& key, const std::string& v) {
  if (v == "0" || v == "false") return 0;
  if (v == "1" || v == "true") return 1;
  fail("config: " + key + " must be 0 or 1, got '" + v + "'");
}

int32_t parse_backbone_value(const std::string& v) {
  if (v == "builtin") return SNN_BACKBONE_BUILTIN;
  if (v == "precomputed") return SNN_BACKBONE_PRECOMPUTED;
  fail("config: backbone must be 'builtin' or 'precomputed', got '" + v + "'");
}

// ---- subcommand state -------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  snn_synth_params p{};
};

struct SplitArgs {
  std::string manifest, out, unseen_prefix;
  uint64_t min_count = 0, seed = 0;
  double test_frac = 0, val_frac = 0;
};

struct TrainArgs {
  std::string manifest, split, out, log, embeddings, config;
  std::string backbone = "builtin";
  double margin = 0, learning_rate = 0, dropout = 0, pos_ratio = 0, eval_threshold = 0;
  uint64_t pairs_per_epoch = 0, val_pairs = 0, seed = 0;
  uint32_t batch_size = 0, epochs = 0, patience = 0, input_size = 0;
  int32_t normalize = 1;
  // options whose explicit presence matters for precedence / conflict checks
  CLI::Option* o_margin = nullptr;
  CLI::Option* o_learning_rate = nullptr;
  CLI::Option* o_batch_size = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_patience = nullptr;
  CLI::Option* o_input_size = nullptr;
  CLI::Option* o_normalize = nullptr;
  CLI::Option* o_backbone = nullptr;
  CLI::Option* o_dropout = nullptr;
  CLI::Option* o_pos_ratio = nullptr;
  CLI::Option* o_pairs_per_epoch = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_val_pairs = nullptr;
  CLI::Option* o_eval_threshold = nullptr;
};

struct EvalArgs {
  std::string manifest, split, model, scope, report, confusion, pairs_out, embeddings;
  uint64_t pairs = 2000, seed = 0;
  double threshold = 0.5;
};

struct SweepArgs {
  std::string manifest, split, model, scope = "all", grid, report, embeddings;
  uint64_t pairs = 2000, seed = 0;
};

struct PairMatrixArgs {
  std::string manifest, split, model, out, rows, cols, embeddings;
  uint64_t pairs_per_cell = 50, seed = 0;
  double threshold = 0.5;
};

struct EmbedArgs {
  std::string manifest, model, out, embeddings;
};

struct GradcheckArgs {
  int32_t instances = 20;
  uint64_t seed = 0;
};

// ---- command implementations -------------------------------------------------

void run_synth(SynthArgs& a) {
  a.p.out_dir = a.out_dir.c_str();
  std::array<char, 4096> manifest{};
  check_status(snn_synth_generate(&a.p, manifest.data(), manifest.size()));
  const uint64_t species =
      static_cast<uint64_t>(a.p.n_seen) + static_cast<uint64_t>(a.p.n_unseen);
  std::cout << "wrote " << species << " species x " << a.p.samples_per_species
            << " samples (" << a.p.resolution << "x" << a.p.resolution << ") -> "
            << manifest.data() << "\n";
}

void run_split(SplitArgs& a) {
  DatasetH ds = open_dataset(a.manifest, "");
  snn_split_params p{};
  snn_split_params_init(&p);
  p.min_count = a.min_count;
  p.test_frac = a.test_frac;
  p.val_frac = a.val_frac;
  p.unseen_prefix = a.unseen_prefix.c_str();
  p.seed = a.seed;
  SplitH sp;
  check_status(snn_split_make(ds.get(), &p, sp.out()));
  check_status(snn_split_save(sp.get(), a.out.c_str()));
  snn_split_stats st{};
  check_status(snn_split_get_stats(sp.get(), &st));
  std::cout << st.n_seen_species << " seen / " << st.n_unseen_species
            << " unseen species; train=" << st.n_train
            << " validation=" << st.n_validation << " test=" << st.n_test << " -> "
            << a.out << "\n";
}

void run_train(TrainArgs& a) {
  snn_train_config cfg{};
  snn_train_config_init(&cfg);
  bool input_size_set = false;

  if (!a.config.empty()) {
    for (const auto& [key, value] : read_config_file(a.config)) {
      if (key == "margin") cfg.margin = parse_double_value(key, value);
      else if (key == "learning_rate") cfg.learning_rate = parse_double_value(key, value);
      else if (key == "batch_size") cfg.batch_size = parse_u32_value(key, value);
      else if (key == "epochs") cfg.max_epochs = parse_u32_value(key, value);
      else if (key == "patience") cfg.patience = parse_u32_value(key, value);
      else if (key == "input_size") {
        cfg.input_size = parse_u32_value(key, value);
        input_size_set = true;
      } else if (key == "normalize") cfg.normalize = parse_bool_value(key, value);
      else if (key == "backbone") cfg.backbone = parse_backbone_value(value);
      else if (key == "dropout") cfg.dropout = parse_double_value(key, value);
      else if (key == "pos_ratio") cfg.pos_ratio = parse_double_value(key, value);
      else if (key == "pairs_per_epoch") cfg.pairs_per_epoch = parse_u64_value(key, value);
      else if (key == "seed") cfg.seed = parse_u64_value(key, value);
    }
  }

  // Command-line flags override config-file values.
  if (a.o_margin->count()) cfg.margin = a.margin;
  if (a.o_learning_rate->count()) cfg.learning_rate = a.learning_rate;
  if (a.o_batch_size->count()) cfg.batch_size = a.batch_size;
  if (a.o_epochs->count()) cfg.max_epochs = a.epochs;
  if (a.o_patience->count()) cfg.patience = a.patience;
  if (a.o_input_size->count()) {
    cfg.input_size = a.input_size;
    input_size_set = true;
  }
  if (a.o_normalize->count()) cfg.normalize = a.normalize;
  if (a.o_backbone->count()) cfg.backbone = parse_backbone_value(a.backbone);
  if (a.o_dropout->count()) cfg.dropout = a.dropout;
  if (a.o_pos_ratio->count()) cfg.pos_ratio = a.pos_ratio;
  if (a.o_pairs_per_epoch->count()) cfg.pairs_per_epoch = a.pairs_per_epoch;
  if (a.o_seed->count()) cfg.seed = a.seed;
  if (a.o_val_pairs->count()) cfg.val_pairs = a.val_pairs;
  if (a.o_eval_threshold->count()) cfg.eval_threshold = a.eval_threshold;

  const bool precomputed = cfg.backbone == SNN_BACKBONE_PRECOMPUTED;
  if (precomputed && a.embeddings.empty())
    fail("train: backbone 'precomputed' requires --embeddings with a feature file");
  if (!precomputed && !a.embeddings.empty())
    fail("train: --embeddings requires --backbone precomputed");
  if (precomputed && input_size_set)
    fail("train: input_size applies only to the builtin backbone");

  DatasetH ds = open_dataset(a.manifest, a.embeddings);
  SplitH sp = load_split(a.split);
  ModelH model;
  snn_train_summary summary{};
  check_status(snn_train(ds.get(), sp.get(), &cfg, a.log.empty() ? nullptr : a.log.c_str(),
                         model.out(), &summary));
  check_status(snn_model_save(model.get(), a.out.c_str()));
  std::cout << "trained " << summary.epochs_run << " epochs, best epoch "
            << summary.best_epoch << ": val_loss=" << fmt(summary.best_val_loss, 6)
            << " val_f1@" << fmt(cfg.eval_threshold, 2) << "="
            << fmt(summary.best_val_f1, 4) << " -> " << a.out << "\n";
}

void run_eval(EvalArgs& a) {
  DatasetH ds = open_dataset(a.manifest, a.embeddings);
  SplitH sp = load_split(a.split);
  ModelH model = load_model(a.model);
  snn_metrics m{};
  check_status(snn_evaluate(model.get(), ds.get(), sp.get(), a.scope.c_str(), a.pairs,
                            a.threshold, a.seed, a.report.empty() ? nullptr : a.report.c_str(),
                            a.pairs_out.empty() ? nullptr : a.pairs_out.c_str(), &m));
  if (!a.confusion.empty()) write_confusion_csv(m, a.confusion);
  std::cout << "scope=" << a.scope << " pairs=" << a.pairs << " " << metrics_row(m) << "\n";
}

// Mirrors the library's grid arithmetic to size the output buffer; the
// library remains the authority on validation.
size_t grid_count_guess(const std::string& grid) {
  double start = 0, stop = 0, step = 0;
  char extra = 0;
  if (std::sscanf(grid.c_str(), "%lf:%lf:%lf%c", &start, &stop, &step, &extra) != 3)
    return 1;
  if (step <= 0 || start > stop) return 1;
  const double span = (stop - start) / step;
  if (span > 1e6) return 1;
  return static_cast<size_t>(span + 1e-9) + 1;
}

void run_sweep(SweepArgs& a) {
  DatasetH ds = open_dataset(a.manifest, a.embeddings);
  SplitH sp = load_split(a.split);
  ModelH model = load_model(a.model);
  std::vector<snn_metrics> rows(grid_count_guess(a.grid));
  size_t n = 0;
  check_status(snn_sweep(model.get(), ds.get(), sp.get(), a.scope.c_str(), a.pairs,
                         a.grid.c_str(), a.seed, a.report.empty() ? nullptr : a.report.c_str(),
                         rows.data(), rows.size(), &n));
  std::cout << "scope=" << a.scope << " pairs=" << a.pairs << " grid=" << a.grid << "\n";
  for (size_t i = 0; i < n; ++i) std::cout << metrics_row(rows[i]) << "\n";
}

void run_pairmatrix(PairMatrixArgs& a) {
  DatasetH ds = open_dataset(a.manifest, a.embeddings);
  SplitH sp = load_split(a.split);
  ModelH model = load_model(a.model);
  check_status(snn_pair_matrix(model.get(), ds.get(), sp.get(),
                               a.rows.empty() ? nullptr : a.rows.c_str(),
                               a.cols.empty() ? nullptr : a.cols.c_str(),
                               a.pairs_per_cell, a.threshold, a.seed, a.out.c_str()));
  size_t n_rows = 0, n_cols = 0;
  if (a.rows.empty()) {
    snn_split_stats st{};
    check_status(snn_split_get_stats(sp.get(), &st));
    n_rows = (st.n_unseen_species + 1) / 2;
    n_cols = st.n_unseen_species - n_rows;
  } else {
    n_rows = static_cast<size_t>(std::count(a.rows.begin(), a.rows.end(), ',')) + 1;
    n_cols = static_cast<size_t>(std::count(a.cols.begin(), a.cols.end(), ',')) + 1;
  }
  std::cout << "wrote " << n_rows << "x" << n_cols << " pair F1 matrix -> " << a.out << "\n";
}

void run_embed(EmbedArgs& a) {
  DatasetH ds = open_dataset(a.manifest, a.embeddings);
  ModelH model = load_model(a.model);
  check_status(snn_export_embeddings(model.get(), ds.get(), a.out.c_str()));
  uint64_t n_samples = 0, n_species = 0;
  check_status(snn_dataset_stats(ds.get(), &n_samples, &n_species));
  std::cout << "wrote " << n_samples << " embeddings -> " << a.out << "\n";
}

void print_gradcheck_line(const char* name, double max_rel_err, double tolerance,
                          int passed, void* /*user*/) {
  std::ostringstream os;
  os << name << ": max rel err " << std::scientific << std::setprecision(3)
     << max_rel_err << " (tol " << std::setprecision(1) << tolerance << ") "
     << (passed ? "ok" : "FAIL");
  std::cout << os.str() << "\n";
}

void run_gradcheck(GradcheckArgs& a) {
  int32_t all_passed = 0;
  check_status(snn_gradcheck(a.instances, a.seed, &print_gradcheck_line, nullptr,
                             &all_passed));
  if (!all_passed) fail("gradient checks failed");
  std::cout << "all checks passed\n";
}

std::string single_line(std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return msg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese verification pipeline: synthesize data, split it for "
               "zero-shot evaluation, train a pair-similarity model, and report "
               "verification metrics."};
  app.require_subcommand(1);

  // synth --------------------------------------------------------------------
  SynthArgs synth;
  snn_synth_params_init(&synth.p);
  auto* c_synth = app.add_subcommand(
      "synth", "Generate a synthetic labeled image corpus with a manifest");
  c_synth->add_option("--out", synth.out_dir, "Output directory (receives manifest.csv and images/)")
      ->required();
  c_synth->add_option("--seen", synth.p.n_seen, "Species meant to be trained on")
      ->capture_default_str();
  c_synth->add_option("--unseen", synth.p.n_unseen, "Holdout species (named with the 'zs' prefix)")
      ->capture_default_str();
  c_synth->add_option("--samples", synth.p.samples_per_species, "Samples per species")
      ->capture_default_str();
  c_synth->add_option("--resolution", synth.p.resolution, "Square image side in pixels")
      ->capture_default_str();
  c_synth->add_option("--seed", synth.p.seed, "Base RNG seed")->capture_default_str();
  c_synth->callback([&] { run_synth(synth); });

  // split ----------------------------------------------------------------------
  SplitArgs split;
  {
    snn_split_params d{};
    snn_split_params_init(&d);
    split.min_count = d.min_count;
    split.test_frac = d.test_frac;
    split.val_frac = d.val_frac;
    split.seed = d.seed;
  }
  auto* c_split = app.add_subcommand(
      "split", "Partition a dataset into train/validation/test with unseen species held out");
  c_split->add_option("--manifest", split.manifest, "Dataset manifest CSV")->required();
  c_split->add_option("--out", split.out, "Split manifest output path")->required();
  c_split->add_option("--min-count", split.min_count,
                      "Species with fewer samples than this become unseen")
      ->capture_default_str();
  c_split->add_option("--test-frac", split.test_frac,
                      "Per seen species, fraction of samples sent to test")
      ->capture_default_str();
  c_split->add_option("--val-frac", split.val_frac,
                      "Fraction of each species' remaining pool sent to validation")
      ->capture_default_str();
  c_split->add_option("--unseen-prefix", split.unseen_prefix,
                      "Species name prefix forced into the unseen group")
      ->capture_default_str();
  c_split->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
  c_split->callback([&] { run_split(split); });

  // train ----------------------------------------------------------------------
  TrainArgs train;
  {
    snn_train_config d{};
    snn_train_config_init(&d);
    train.margin = d.margin;
    train.learning_rate = d.learning_rate;
    train.batch_size = d.batch_size;
    train.epochs = d.max_epochs;
    train.patience = d.patience;
    train.input_size = d.input_size;
    train.normalize = d.normalize;
    train.dropout = d.dropout;
    train.pos_ratio = d.pos_ratio;
    train.pairs_per_epoch = d.pairs_per_epoch;
    train.seed = d.seed;
    train.val_pairs = d.val_pairs;
    train.eval_threshold = d.eval_threshold;
  }
  auto* c_train = app.add_subcommand(
      "train", "Train a pair-similarity model and write the best checkpoint");
  c_train->add_option("--manifest", train.manifest, "Dataset manifest CSV")->required();
  c_train->add_option("--split", train.split, "Split manifest path")->required();
  c_train->add_option("--out", train.out, "Checkpoint output path")->required();
  c_train->add_option("--log", train.log, "Per-epoch CSV log output path");
  c_train->add_option("--config", train.config,
                      "Config file with key = value lines (# comments); flags override it");
  c_train->add_option("--embeddings", train.embeddings,
                      "Feature file for the precomputed backbone");
  train.o_margin = c_train->add_option("--margin", train.margin, "Contrastive margin")
                        ->capture_default_str();
  train.o_learning_rate =
      c_train->add_option("--learning-rate", train.learning_rate, "Adam learning rate")
          ->capture_default_str();
  train.o_batch_size = c_train->add_option("--batch-size", train.batch_size, "Pairs per batch")
                           ->capture_default_str();
  train.o_epochs = c_train->add_option("--epochs", train.epochs, "Maximum training epochs")
                       ->capture_default_str();
  train.o_patience =
      c_train->add_option("--patience", train.patience,
                          "Epochs without validation improvement before stopping")
          ->capture_default_str();
  train.o_input_size =
      c_train->add_option("--input-size", train.input_size,
                          "Square input side for the builtin backbone")
          ->capture_default_str();
  train.o_normalize = c_train->add_option("--normalize", train.normalize,
                                          "L2-normalize embeddings (0 or 1)")
                          ->check(CLI::Range(0, 1))
                          ->capture_default_str();
  train.o_backbone = c_train->add_option("--backbone", train.backbone,
                                         "Feature extractor: builtin or precomputed")
                         ->check(CLI::IsMember({"builtin", "precomputed"}))
                         ->capture_default_str();
  train.o_dropout = c_train->add_option("--dropout", train.dropout,
                                        "Drop probability before the embedding head")
                        ->capture_default_str();
  train.o_pos_ratio = c_train->add_option("--pos-ratio", train.pos_ratio,
                                          "Share of sampled pairs drawn as similar")
                          ->capture_default_str();
  train.o_pairs_per_epoch =
      c_train->add_option("--pairs-per-epoch", train.pairs_per_epoch,
                          "Training pairs sampled each epoch (0 = automatic)")
          ->capture_default_str();
  train.o_seed = c_train->add_option("--seed", train.seed, "Base RNG seed")
                     ->capture_default_str();
  train.o_val_pairs = c_train->add_option("--val-pairs", train.val_pairs,
                                          "Fixed validation pairs (0 = automatic)")
                          ->capture_default_str();
  train.o_eval_threshold =
      c_train->add_option("--eval-threshold", train.eval_threshold,
                          "Decision threshold for the logged validation F1")
          ->capture_default_str();
  c_train->callback([&] { run_train(train); });

  // eval -----------------------------------------------------------------------
  EvalArgs eval;
  auto* c_eval = app.add_subcommand(
      "eval", "Score sampled test pairs and report verification metrics");
  c_eval->add_option("--manifest", eval.manifest, "Dataset manifest CSV")->required();
  c_eval->add_option("--split", eval.split, "Split manifest path")->required();
  c_eval->add_option("--model", eval.model, "Model checkpoint path")->required();
  c_eval->add_option("--scope", eval.scope, "Species scope: seen, unseen, or all")
      ->required()
      ->check(CLI::IsMember({"seen", "unseen", "all"}));
  c_eval->add_option("--pairs", eval.pairs, "Number of test pairs to sample")
      ->capture_default_str();
  c_eval->add_option("--threshold", eval.threshold,
                     "Similarity-score decision threshold")
      ->capture_default_str();
  c_eval->add_option("--seed", eval.seed, "Pair-sampling seed")->capture_default_str();
  c_eval->add_option("--report", eval.report, "Metrics report CSV output path");
  c_eval->add_option("--confusion", eval.confusion, "Confusion matrix CSV output path");
  c_eval->add_option("--pairs-out", eval.pairs_out, "Scored pair list CSV output path");
  c_eval->add_option("--embeddings", eval.embeddings,
                     "Feature file for precomputed-backbone models");
  c_eval->callback([&] { run_eval(eval); });

  // sweep ----------------------------------------------------------------------
  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand(
      "sweep", "Evaluate one pair sample across a threshold grid");
  c_sweep->add_option("--manifest", sweep.manifest, "Dataset manifest CSV")->required();
  c_sweep->add_option("--split", sweep.split, "Split manifest path")->required();
  c_sweep->add_option("--model", sweep.model, "Model checkpoint path")->required();
  c_sweep->add_option("--grid", sweep.grid, "Threshold grid start:stop:step")->required();
  c_sweep->add_option("--scope", sweep.scope, "Species scope: seen, unseen, or all")
      ->check(CLI::IsMember({"seen", "unseen", "all"}))
      ->capture_default_str();
  c_sweep->add_option("--pairs", sweep.pairs, "Number of test pairs to sample")
      ->capture_default_str();
  c_sweep->add_option("--seed", sweep.seed, "Pair-sampling seed")->capture_default_str();
  c_sweep->add_option("--report", sweep.report, "Sweep report CSV output path");
  c_sweep->add_option("--embeddings", sweep.embeddings,
                      "Feature file for precomputed-backbone models");
  c_sweep->callback([&] { run_sweep(sweep); });

  // pairmatrix -------------------------------------------------------------------
  PairMatrixArgs pm;
  auto* c_pm = app.add_subcommand(
      "pairmatrix",
      "Cross-species pair F1 matrix (defaults to two halves of the unseen species)");
  c_pm->add_option("--manifest", pm.manifest, "Dataset manifest CSV")->required();
  c_pm->add_option("--split", pm.split, "Split manifest path")->required();
  c_pm->add_option("--model", pm.model, "Model checkpoint path")->required();
  c_pm->add_option("--out", pm.out, "Matrix CSV output path")->required();
  c_pm->add_option("--rows", pm.rows,
                   "Comma-separated row species (requires --cols; the lists "
                   "must not share a species)");
  c_pm->add_option("--cols", pm.cols, "Comma-separated column species");
  c_pm->add_option("--pairs-per-cell", pm.pairs_per_cell,
                   "Pairs scored per species pair")
      ->capture_default_str();
  c_pm->add_option("--threshold", pm.threshold, "Similarity-score decision threshold")
      ->capture_default_str();
  c_pm->add_option("--seed", pm.seed, "Pair-sampling seed")->capture_default_str();
  c_pm->add_option("--embeddings", pm.embeddings,
                   "Feature file for precomputed-backbone models");
  c_pm->callback([&] { run_pairmatrix(pm); });

  // embed ----------------------------------------------------------------------
  EmbedArgs embed;
  auto* c_embed = app.add_subcommand(
      "embed", "Export an embedding vector for every sample in the manifest");
  c_embed->add_option("--manifest", embed.manifest, "Dataset manifest CSV")->required();
  c_embed->add_option("--model", embed.model, "Model checkpoint path")->required();
  c_embed->add_option("--out", embed.out, "Embedding file output path")->required();
  c_embed->add_option("--embeddings", embed.embeddings,
                      "Feature file for precomputed-backbone models");
  c_embed->callback([&] { run_embed(embed); });

  // gradcheck ------------------------------------------------------------------
  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand(
      "gradcheck", "Finite-difference check of every differentiable operation");
  c_gc->add_option("--instances", gc.instances, "Random instances per check")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_gc->add_option("--seed", gc.seed, "Base RNG seed")->capture_default_str();
  c_gc->callback([&] { run_gradcheck(gc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << single_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << single_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
