#include "snn.h"

#include <cstring>
#include <exception>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snn/data.hpp"
#include "snn/gradcheck.hpp"
#include "snn/metrics.hpp"
#include "snn/network.hpp"
#include "snn/synth.hpp"
#include "snn/trainer.hpp"

struct snn_dataset {
  snn::Dataset ds;
  std::optional<snn::EmbeddingStore> features;
};

struct snn_split {
  snn::SplitManifest split;
};

struct snn_model {
  snn::ModelParams params;
};

namespace {

thread_local std::string g_error;

bool contains_any(const std::string& msg, std::initializer_list<const char*> needles) {
  for (const char* n : needles)
    if (msg.find(n) != std::string::npos) return true;
  return false;
}

// Refine a wrapper's fallback code using the message texture the library
// throws with: I/O wording beats format wording beats argument wording.
snn_status classify(const std::string& msg, snn_status fallback) {
  if (contains_any(msg, {"cannot open", "write failed", "cannot decode image",
                         "cannot write image"}))
    return SNN_ERR_IO;
  if (contains_any(msg, {"bad magic", "not a checkpoint file", "not an embedding file",
                         "unsupported checkpoint version", "unsupported embedding file version",
                         "truncated file", "trailing bytes", "must start with header",
                         "metadata", "malformed"}))
    return SNN_ERR_FORMAT;
  if (contains_any(msg, {"config:", "grid:", "unknown scope", "unknown partition",
                         "buffer too small"}))
    return SNN_ERR_INVALID_ARGUMENT;
  return fallback;
}

template <typename F>
snn_status guard(snn_status fallback, F&& f) {
  g_error.clear();
  try {
    f();
    return SNN_OK;
  } catch (const std::exception& e) {
    g_error = e.what();
    return classify(g_error, fallback);
  } catch (...) {
    g_error = "unidentified failure";
    return SNN_ERR_INTERNAL;
  }
}

snn_status arg_error(const char* msg) {
  g_error = msg;
  return SNN_ERR_INVALID_ARGUMENT;
}

bool has_path(const char* p) { return p != nullptr && *p != '\0'; }

const snn::EmbeddingStore* features_of(const snn_dataset* d) {
  return d->features ? &*d->features : nullptr;
}

void fill_metrics(const snn::MetricsReport& r, snn_metrics* out) {
  out->threshold = r.threshold;
  out->tp = r.cm.tp;
  out->fn = r.cm.fn;
  out->fp = r.cm.fp;
  out->tn = r.cm.tn;
  out->macro_precision = r.macro_precision;
  out->macro_recall = r.macro_recall;
  out->macro_f1 = r.macro_f1;
  out->accuracy = r.accuracy;
}

}  // namespace

extern "C" {

const char* snn_status_name(snn_status status) {
  switch (status) {
    case SNN_OK: return "ok";
    case SNN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SNN_ERR_IO: return "io error";
    case SNN_ERR_FORMAT: return "format error";
    case SNN_ERR_DATA: return "data error";
    case SNN_ERR_TRAINING: return "training error";
    case SNN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* snn_last_error(void) { return g_error.c_str(); }

/* ---- synthetic corpus --------------------------------------------------- */

void snn_synth_params_init(snn_synth_params* params) {
  if (!params) return;
  const snn::SynthParams d;
  params->n_seen = d.n_seen;
  params->n_unseen = d.n_unseen;
  params->samples_per_species = d.samples_per_species;
  params->resolution = d.resolution;
  params->seed = d.seed;
  params->out_dir = nullptr;
}

snn_status snn_synth_generate(const snn_synth_params* params, char* manifest_path,
                              size_t manifest_path_cap) {
  if (!params) return arg_error("synth: params is required");
  if (!has_path(params->out_dir)) return arg_error("synth: out_dir is required");
  return guard(SNN_ERR_DATA, [&] {
    snn::SynthParams sp;
    sp.n_seen = params->n_seen;
    sp.n_unseen = params->n_unseen;
    sp.samples_per_species = params->samples_per_species;
    sp.resolution = params->resolution;
    sp.seed = params->seed;
    sp.out_dir = params->out_dir;
    const snn::SynthResult res = snn::synth_generate(sp);
    if (manifest_path) {
      if (res.manifest_path.size() + 1 > manifest_path_cap)
        throw std::runtime_error("synth: manifest path buffer too small");
      std::memcpy(manifest_path, res.manifest_path.c_str(), res.manifest_path.size() + 1);
    }
  });
}

/* ---- dataset ------------------------------------------------------------ */

snn_status snn_dataset_open(const char* manifest_path, snn_dataset** out) {
  if (!has_path(manifest_path) || !out)
    return arg_error("dataset: manifest path and out handle are required");
  return guard(SNN_ERR_DATA, [&] {
    auto d = std::make_unique<snn_dataset>();
    d->ds = snn::Dataset::load_manifest(manifest_path);
    *out = d.release();
  });
}

snn_status snn_dataset_attach_embeddings(snn_dataset* dataset, const char* embv_path) {
  if (!dataset || !has_path(embv_path))
    return arg_error("dataset: handle and embeddings path are required");
  return guard(SNN_ERR_DATA, [&] {
    snn::EmbeddingStore store = snn::load_embeddings(embv_path);
    snn::check_embeddings_join(store, dataset->ds);
    dataset->features = std::move(store);
  });
}

snn_status snn_dataset_stats(const snn_dataset* dataset, uint64_t* n_samples,
                             uint64_t* n_species) {
  if (!dataset) return arg_error("dataset: handle is required");
  return guard(SNN_ERR_INTERNAL, [&] {
    if (n_samples) *n_samples = dataset->ds.size();
    if (n_species) {
      std::set<std::string> species;
      for (const auto& row : dataset->ds.rows()) species.insert(row.species);
      *n_species = species.size();
    }
  });
}

void snn_dataset_close(snn_dataset* dataset) { delete dataset; }

/* ---- zero-shot split ---------------------------------------------------- */

void snn_split_params_init(snn_split_params* params) {
  if (!params) return;
  const snn::SplitParams d;
  params->min_count = d.min_count;
  params->test_frac = d.test_frac;
  params->val_frac = d.val_frac;
  params->unseen_prefix = nullptr;
  params->seed = d.seed;
}

snn_status snn_split_make(const snn_dataset* dataset, const snn_split_params* params,
                          snn_split** out) {
  if (!dataset || !params || !out)
    return arg_error("split: dataset, params, and out handle are required");
  return guard(SNN_ERR_DATA, [&] {
    snn::SplitParams sp;
    sp.min_count = params->min_count;
    sp.test_frac = params->test_frac;
    sp.val_frac = params->val_frac;
    sp.unseen_prefix = params->unseen_prefix ? params->unseen_prefix : "";
    sp.seed = params->seed;
    auto s = std::make_unique<snn_split>();
    s->split = snn::make_split(dataset->ds, sp);
    *out = s.release();
  });
}

snn_status snn_split_save(const snn_split* split, const char* path) {
  if (!split || !has_path(path)) return arg_error("split: handle and path are required");
  return guard(SNN_ERR_IO, [&] { snn::save_split(split->split, path); });
}

snn_status snn_split_load(const char* path, snn_split** out) {
  if (!has_path(path) || !out) return arg_error("split: path and out handle are required");
  return guard(SNN_ERR_FORMAT, [&] {
    auto s = std::make_unique<snn_split>();
    s->split = snn::load_split(path);
    *out = s.release();
  });
}

snn_status snn_split_get_stats(const snn_split* split, snn_split_stats* out) {
  if (!split || !out) return arg_error("split: handle and out struct are required");
  return guard(SNN_ERR_INTERNAL, [&] {
    out->n_train = split->split.count(snn::Partition::kTrain);
    out->n_validation = split->split.count(snn::Partition::kValidation);
    out->n_test = split->split.count(snn::Partition::kTest);
    std::set<std::string> species;
    for (const auto& e : split->split.entries) species.insert(e.species);
    const size_t unseen = split->split.unseen_species().size();
    out->n_unseen_species = unseen;
    out->n_seen_species = species.size() - unseen;
  });
}

void snn_split_free(snn_split* split) { delete split; }

/* ---- training ------------------------------------------------------------ */

void snn_train_config_init(snn_train_config* config) {
  if (!config) return;
  const snn::TrainConfig d;
  config->max_epochs = d.max_epochs;
  config->patience = d.patience;
  config->batch_size = d.batch_size;
  config->learning_rate = d.learning_rate;
  config->margin = d.margin;
  config->dropout = d.dropout;
  config->pos_ratio = d.pos_ratio;
  config->pairs_per_epoch = d.pairs_per_epoch;
  config->val_pairs = d.val_pairs;
  config->input_size = d.input_size;
  config->backbone = SNN_BACKBONE_BUILTIN;
  config->normalize = d.normalize ? 1 : 0;
  config->eval_threshold = d.eval_threshold;
  config->seed = d.seed;
}

snn_status snn_train(const snn_dataset* dataset, const snn_split* split,
                     const snn_train_config* config, const char* log_path,
                     snn_model** out, snn_train_summary* summary) {
  if (!dataset || !split || !config || !out)
    return arg_error("train: dataset, split, config, and out handle are required");
  if (config->backbone != SNN_BACKBONE_BUILTIN && config->backbone != SNN_BACKBONE_PRECOMPUTED)
    return arg_error("train: backbone must be SNN_BACKBONE_BUILTIN or SNN_BACKBONE_PRECOMPUTED");
  return guard(SNN_ERR_TRAINING, [&] {
    snn::TrainConfig cfg;
    cfg.max_epochs = config->max_epochs;
    cfg.patience = config->patience;
    cfg.batch_size = config->batch_size;
    cfg.learning_rate = config->learning_rate;
    cfg.margin = config->margin;
    cfg.dropout = config->dropout;
    cfg.pos_ratio = config->pos_ratio;
    cfg.pairs_per_epoch = config->pairs_per_epoch;
    cfg.val_pairs = config->val_pairs;
    cfg.input_size = config->input_size;
    cfg.backbone = config->backbone == SNN_BACKBONE_PRECOMPUTED
                       ? snn::Backbone::kPrecomputed
                       : snn::Backbone::kBuiltin;
    cfg.normalize = config->normalize != 0;
    cfg.eval_threshold = config->eval_threshold;
    cfg.seed = config->seed;
    snn::TrainResult res = snn::train(dataset->ds, split->split, cfg, features_of(dataset));
    if (has_path(log_path)) snn::save_train_log(res.log, log_path);
    if (summary) {
      summary->epochs_run = static_cast<uint32_t>(res.log.epochs.size());
      summary->best_epoch = res.log.best_epoch;
      summary->best_val_loss = res.log.best_val_loss;
      summary->best_val_f1 = 0;
      summary->final_train_loss = 0;
      for (const auto& e : res.log.epochs) {
        if (e.epoch == res.log.best_epoch) summary->best_val_f1 = e.val_f1;
      }
      if (!res.log.epochs.empty())
        summary->final_train_loss = res.log.epochs.back().train_loss;
    }
    auto m = std::make_unique<snn_model>();
    m->params = std::move(res.params);
    *out = m.release();
  });
}

/* ---- model --------------------------------------------------------------- */

snn_status snn_model_save(const snn_model* model, const char* path) {
  if (!model || !has_path(path)) return arg_error("model: handle and path are required");
  return guard(SNN_ERR_IO, [&] { snn::save_checkpoint(model->params, path); });
}

snn_status snn_model_load(const char* path, snn_model** out) {
  if (!has_path(path) || !out) return arg_error("model: path and out handle are required");
  return guard(SNN_ERR_FORMAT, [&] {
    auto m = std::make_unique<snn_model>();
    m->params = snn::load_checkpoint(path);
    *out = m.release();
  });
}

snn_status snn_model_info(const snn_model* model, int32_t* backbone,
                          uint32_t* input_size, int32_t* normalize) {
  if (!model) return arg_error("model: handle is required");
  return guard(SNN_ERR_INTERNAL, [&] {
    if (backbone)
      *backbone = model->params.backbone == snn::Backbone::kPrecomputed
                      ? SNN_BACKBONE_PRECOMPUTED
                      : SNN_BACKBONE_BUILTIN;
    if (input_size) *input_size = static_cast<uint32_t>(model->params.input_size);
    if (normalize) *normalize = model->params.normalize ? 1 : 0;
  });
}

void snn_model_free(snn_model* model) { delete model; }

/* ---- evaluation ----------------------------------------------------------- */

snn_status snn_evaluate(const snn_model* model, const snn_dataset* dataset,
                        const snn_split* split, const char* scope, uint64_t n_pairs,
                        double threshold, uint64_t seed, const char* report_path,
                        const char* pairs_path, snn_metrics* out) {
  if (!model || !dataset || !split || !scope)
    return arg_error("evaluate: model, dataset, split, and scope are required");
  return guard(SNN_ERR_DATA, [&] {
    const snn::EvalOutcome res = snn::evaluate_scope(
        model->params, dataset->ds, split->split, features_of(dataset),
        snn::Partition::kTest, snn::parse_scope(scope), n_pairs, threshold, seed);
    if (has_path(report_path)) snn::save_reports_csv({res.report}, report_path);
    if (has_path(pairs_path)) snn::save_pairs(res.pairs, pairs_path);
    if (out) fill_metrics(res.report, out);
  });
}

snn_status snn_sweep(const snn_model* model, const snn_dataset* dataset,
                     const snn_split* split, const char* scope, uint64_t n_pairs,
                     const char* grid, uint64_t seed, const char* report_path,
                     snn_metrics* out, size_t out_cap, size_t* n_out) {
  if (!model || !dataset || !split || !scope || !grid)
    return arg_error("sweep: model, dataset, split, scope, and grid are required");
  return guard(SNN_ERR_DATA, [&] {
    const std::vector<double> grid_values = snn::parse_grid(grid);
    const snn::EvalOutcome drawn = snn::evaluate_scope(
        model->params, dataset->ds, split->split, features_of(dataset),
        snn::Partition::kTest, snn::parse_scope(scope), n_pairs, grid_values.front(), seed);
    std::vector<int> labels;
    labels.reserve(drawn.pairs.size());
    for (const auto& p : drawn.pairs) labels.push_back(p.label);
    const std::vector<snn::MetricsReport> reports =
        snn::threshold_sweep(labels, drawn.scores, grid_values);
    if (has_path(report_path)) snn::save_reports_csv(reports, report_path);
    if (n_out) *n_out = reports.size();
    if (out) {
      if (out_cap < reports.size())
        throw std::runtime_error("sweep: output buffer too small for " +
                                 std::to_string(reports.size()) + " reports");
      for (size_t i = 0; i < reports.size(); ++i) fill_metrics(reports[i], &out[i]);
    }
  });
}

namespace {

std::vector<std::string> split_species_csv(const char* csv) {
  std::vector<std::string> species;
  std::string token;
  for (const char* p = csv;; ++p) {
    if (*p == ',' || *p == '\0') {
      if (token.empty()) throw std::runtime_error("pair matrix: empty species name in list");
      species.push_back(std::move(token));
      token.clear();
      if (*p == '\0') break;
    } else {
      token += *p;
    }
  }
  return species;
}

}  // namespace

snn_status snn_pair_matrix(const snn_model* model, const snn_dataset* dataset,
                           const snn_split* split, const char* row_species_csv,
                           const char* col_species_csv, uint64_t pairs_per_cell,
                           double threshold, uint64_t seed, const char* out_path) {
  if (!model || !dataset || !split || !has_path(out_path))
    return arg_error("pair matrix: model, dataset, split, and output path are required");
  if (has_path(row_species_csv) != has_path(col_species_csv))
    return arg_error("pair matrix: provide both species lists or neither");
  return guard(SNN_ERR_DATA, [&] {
    std::vector<std::string> rows, cols;
    if (has_path(row_species_csv)) {
      rows = split_species_csv(row_species_csv);
      cols = split_species_csv(col_species_csv);
    } else {
      const std::vector<std::string> unseen = split->split.unseen_species();
      if (unseen.size() < 2)
        throw std::runtime_error(
            "pair matrix: the split needs at least two unseen species to form "
            "default row and column sets");
      const size_t half = (unseen.size() + 1) / 2;
      rows.assign(unseen.begin(), unseen.begin() + static_cast<std::ptrdiff_t>(half));
      cols.assign(unseen.begin() + static_cast<std::ptrdiff_t>(half), unseen.end());
    }
    const snn::PairF1Matrix m = snn::pair_f1_matrix_for_model(
        model->params, dataset->ds, features_of(dataset), rows, cols,
        pairs_per_cell, threshold, seed);
    snn::save_pair_f1(m, out_path);
  });
}

snn_status snn_export_embeddings(const snn_model* model, const snn_dataset* dataset,
                                 const char* out_path) {
  if (!model || !dataset || !has_path(out_path))
    return arg_error("embed: model, dataset, and output path are required");
  return guard(SNN_ERR_DATA, [&] {
    std::vector<size_t> rows(dataset->ds.size());
    std::iota(rows.begin(), rows.end(), size_t{0});
    const snn::EmbeddingStore store =
        snn::embed_samples(model->params, dataset->ds, features_of(dataset), rows);
    snn::save_embeddings(store, out_path);
  });
}

/* ---- gradient verification ------------------------------------------------ */

snn_status snn_gradcheck(int32_t instances, uint64_t seed,
                         snn_gradcheck_report_fn report, void* user,
                         int32_t* all_passed) {
  return guard(SNN_ERR_INTERNAL, [&] {
    const std::vector<snn::GradCheckReport> reports =
        snn::run_gradient_checks(instances, seed);
    for (const auto& r : reports)
      if (report) report(r.name.c_str(), r.max_rel_err, r.tolerance, r.passed ? 1 : 0, user);
    if (all_passed) *all_passed = snn::gradient_checks_passed(reports) ? 1 : 0;
  });
}

} /* extern "C" */
