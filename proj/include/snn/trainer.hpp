#pragma once

// Mini-batch training with Adam and early stopping, plus the evaluation
// entry points (fixed pair list, scope-drawn pairs, and the three-protocol
// seen / unseen / all report set).

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "snn/data.hpp"
#include "snn/metrics.hpp"
#include "snn/network.hpp"

namespace snn {

struct TrainConfig {
  uint32_t max_epochs = 100;
  uint32_t patience = 7;
  uint32_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;       // Adam first-moment decay
  double beta2 = 0.999;     // Adam second-moment decay
  double epsilon = 1e-8;    // Adam denominator floor
  double margin = 1.0;
  double dropout = 0.2;
  double pos_ratio = 0.5;
  uint64_t pairs_per_epoch = 0;  // 0 -> 4 * n_train, capped at 50000
  uint64_t val_pairs = 0;        // 0 -> clamp(2 * n_val, 64, 4096)
  uint32_t input_size = 64;      // square input side for the builtin backbone
  Backbone backbone = Backbone::kBuiltin;
  bool normalize = true;
  double eval_threshold = 0.5;   // threshold for the logged validation F1
  uint64_t seed = 0;
};

void validate_config(const TrainConfig& cfg);

// Tracks the best validation loss; improvement must be strict.
class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(uint32_t patience) : patience_(patience) {}

  // Feed one epoch's validation loss; returns true when it improved the best.
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  uint32_t stale() const { return stale_; }
  double best() const { return best_; }
  uint32_t best_epoch() const { return best_epoch_; }

 private:
  uint32_t patience_;
  uint32_t epoch_ = 0;
  uint32_t stale_ = 0;
  uint32_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  uint32_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_f1 = 0;
  uint32_t stale_epochs = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  uint32_t best_epoch = 0;
  double best_val_loss = 0;
};

struct TrainResult {
  ModelParams params;  // parameters from the best-validation epoch
  TrainLog log;
};

// Train on the split's train partition, monitoring loss on a fixed pair set
// from the validation partition. features must be non-null iff the backbone
// is precomputed. Throws on empty partitions, invalid config, or a
// non-finite batch loss.
TrainResult train(const Dataset& ds, const SplitManifest& split, const TrainConfig& cfg,
                  const EmbeddingStore* features = nullptr);

// Log CSV: header epoch,train_loss,val_loss,val_f1,stale_epochs.
void save_train_log(const TrainLog& log, const std::string& path);

// Embed the given dataset rows in inference mode (no dropout, no
// augmentation), mapping sample id -> embedding vector.
EmbeddingStore embed_samples(const ModelParams& p, const Dataset& ds,
                             const EmbeddingStore* features,
                             const std::vector<size_t>& rows);

struct EvalOutcome {
  MetricsReport report;
  std::vector<PairSample> pairs;
  std::vector<double> scores;  // parallel to pairs
};

// Score an explicit pair list against the model and report at the threshold.
EvalOutcome evaluate_model(const ModelParams& p, const Dataset& ds,
                           const EmbeddingStore* features,
                           const std::vector<PairSample>& pairs, double threshold);

// Draw a balanced pair set from one scope of a partition, then evaluate.
EvalOutcome evaluate_scope(const ModelParams& p, const Dataset& ds,
                           const SplitManifest& split, const EmbeddingStore* features,
                           Partition part, Scope scope, size_t n_pairs,
                           double threshold, uint64_t seed);

struct ProtocolReports {
  MetricsReport seen;    // seen-species test pairs
  MetricsReport unseen;  // conventional zero-shot: unseen-species test pairs
  MetricsReport all;     // generalized zero-shot: whole test partition
};

ProtocolReports evaluate_protocols(const ModelParams& p, const Dataset& ds,
                                   const SplitManifest& split,
                                   const EmbeddingStore* features, size_t n_pairs,
                                   double threshold, uint64_t seed);

// Model-backed per-species-pair F1 grid over all samples of the listed
// species (regardless of partition).
PairF1Matrix pair_f1_matrix_for_model(const ModelParams& p, const Dataset& ds,
                                      const EmbeddingStore* features,
                                      const std::vector<std::string>& row_species,
                                      const std::vector<std::string>& col_species,
                                      uint64_t pairs_per_cell, double threshold,
                                      uint64_t seed);

}  // namespace snn
