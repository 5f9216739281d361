#pragma once

// Verification decisions, confusion matrices, macro-averaged metrics,
// threshold sweeps, and per-species-pair F1 grids.
//
// Convention: the "similar" class (label 0) is the positive class. A pair is
// predicted similar iff its score is strictly below the threshold; a tie
// counts as dissimilar. Macro precision/recall/F1 are unweighted means over
// the two classes {similar, dissimilar}; zero-denominator precision or
// recall is defined as 0.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace snn {

struct ConfusionMatrix {
  uint64_t tp = 0;  // actually similar, predicted similar
  uint64_t fn = 0;  // actually similar, predicted dissimilar
  uint64_t fp = 0;  // actually dissimilar, predicted similar
  uint64_t tn = 0;  // actually dissimilar, predicted dissimilar
  uint64_t total() const { return tp + fn + fp + tn; }
};

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricsReport {
  double threshold = 0;
  ConfusionMatrix cm;
  ClassMetrics similar;
  ClassMetrics dissimilar;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  double accuracy = 0;
};

// true => predicted similar. Throws on negative score.
bool decide_similar(double score, double threshold);

// One decision per (label, score) pair; labels are 0 similar / 1 dissimilar.
// An empty input yields the all-zero matrix. Throws on length mismatch or a
// label outside {0,1}.
ConfusionMatrix confusion(const std::vector<int>& labels,
                          const std::vector<double>& scores, double threshold);

// Throws on an empty (total == 0) matrix.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, double threshold);

// One report per grid value, in grid order, from a single score pass.
std::vector<MetricsReport> threshold_sweep(const std::vector<int>& labels,
                                           const std::vector<double>& scores,
                                           const std::vector<double>& grid);

// Parse "start:stop:step" into an inclusive grid. Throws on malformed specs,
// step <= 0, or start > stop.
std::vector<double> parse_grid(const std::string& spec);

// Report CSV: header threshold,precision,recall,f1,accuracy,tp,fn,fp,tn with
// the macro-averaged precision/recall/f1.
void save_reports_csv(const std::vector<MetricsReport>& reports, const std::string& path);
std::vector<MetricsReport> load_reports_csv(const std::string& path);

// Render one report as the human-readable block the CLI prints.
std::string format_report_text(const MetricsReport& r);

struct PairF1Matrix {
  std::vector<std::string> row_species;
  std::vector<std::string> col_species;
  std::vector<double> f1;            // row-major, row_species x col_species
  std::vector<uint64_t> pair_count;  // pairs actually scored per cell
  double threshold = 0.5;
};

// Score for the pair (species_a sample ia, species_b sample ib), where the
// sample index counts that species' samples in an order fixed by the caller.
using PairScorer =
    std::function<double(const std::string& species_a, size_t ia,
                         const std::string& species_b, size_t ib)>;

// For each (row, col) species cell: draw a balanced pair set — positives
// (same-species pairs, half from each species where both have >= 2 samples)
// and negatives (one sample from each species) — score it, and record the
// macro F1 at the threshold. Samples are drawn with replacement across
// pairs (species can be tiny), but the two members of a positive pair are
// always distinct. Cells pairing a species with itself are rejected, as are
// species with no samples. Deterministic per seed.
PairF1Matrix pair_f1_matrix(const std::map<std::string, size_t>& species_sizes,
                            const std::vector<std::string>& row_species,
                            const std::vector<std::string>& col_species,
                            uint64_t pairs_per_cell, double threshold, uint64_t seed,
                            const PairScorer& scorer);

// Grid CSV: header "species,<col...>", one row per row species, F1 values.
void save_pair_f1(const PairF1Matrix& m, const std::string& path);

}  // namespace snn
