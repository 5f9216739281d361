#include "snn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "snn/rng.hpp"

namespace snn {

namespace {

double safe_div(double num, double den) { return den > 0 ? num / den : 0.0; }

ClassMetrics class_metrics(uint64_t tp, uint64_t fp, uint64_t fn) {
  ClassMetrics m;
  m.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

void append_row(std::string& out, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%llu,%llu,%llu\n", r.threshold,
                r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy,
                static_cast<unsigned long long>(r.cm.tp),
                static_cast<unsigned long long>(r.cm.fn),
                static_cast<unsigned long long>(r.cm.fp),
                static_cast<unsigned long long>(r.cm.tn));
  out += buf;
}

}  // namespace

bool decide_similar(double score, double threshold) {
  if (score < 0) throw std::runtime_error("decide: score must be >= 0, got " +
                                          std::to_string(score));
  return score < threshold;
}

ConfusionMatrix confusion(const std::vector<int>& labels,
                          const std::vector<double>& scores, double threshold) {
  if (labels.size() != scores.size())
    throw std::runtime_error("confusion: " + std::to_string(labels.size()) +
                             " labels vs " + std::to_string(scores.size()) + " scores");
  ConfusionMatrix cm;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::runtime_error("confusion: label must be 0 or 1, got " +
                               std::to_string(labels[i]));
    const bool similar = decide_similar(scores[i], threshold);
    if (labels[i] == 0)
      similar ? ++cm.tp : ++cm.fn;
    else
      similar ? ++cm.fp : ++cm.tn;
  }
  return cm;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, double threshold) {
  if (cm.total() == 0)
    throw std::runtime_error("metrics: confusion matrix is empty");
  MetricsReport r;
  r.threshold = threshold;
  r.cm = cm;
  r.similar = class_metrics(cm.tp, cm.fp, cm.fn);
  // for the dissimilar class, tn plays the role of "true positive"
  r.dissimilar = class_metrics(cm.tn, cm.fn, cm.fp);
  r.macro_precision = (r.similar.precision + r.dissimilar.precision) / 2.0;
  r.macro_recall = (r.similar.recall + r.dissimilar.recall) / 2.0;
  r.macro_f1 = (r.similar.f1 + r.dissimilar.f1) / 2.0;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return r;
}

std::vector<MetricsReport> threshold_sweep(const std::vector<int>& labels,
                                           const std::vector<double>& scores,
                                           const std::vector<double>& grid) {
  if (grid.empty()) throw std::runtime_error("sweep: threshold grid is empty");
  std::vector<MetricsReport> out;
  out.reserve(grid.size());
  for (double t : grid) {
    if (t < 0) throw std::runtime_error("sweep: negative threshold in grid");
    out.push_back(metrics_from_confusion(confusion(labels, scores, t), t));
  }
  return out;
}

std::vector<double> parse_grid(const std::string& spec) {
  double start = 0, stop = 0, step = 0;
  char extra = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf%c", &start, &stop, &step, &extra) != 3)
    throw std::runtime_error("grid: expected start:stop:step, got '" + spec + "'");
  if (step <= 0) throw std::runtime_error("grid: step must be > 0 in '" + spec + "'");
  if (start > stop)
    throw std::runtime_error("grid: start exceeds stop in '" + spec + "'");
  if (start < 0) throw std::runtime_error("grid: thresholds must be >= 0 in '" + spec + "'");
  const double span = (stop - start) / step;
  if (span > 1e6) throw std::runtime_error("grid: too many steps in '" + spec + "'");
  const size_t count = static_cast<size_t>(std::floor(span + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (size_t i = 0; i < count; ++i) grid[i] = start + static_cast<double>(i) * step;
  return grid;
}

void save_reports_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
  std::string out = "threshold,precision,recall,f1,accuracy,tp,fn,fp,tn\n";
  for (const auto& r : reports) append_row(out, r);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << out;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<MetricsReport> load_reports_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) ||
      (line != "threshold,precision,recall,f1,accuracy,tp,fn,fp,tn" &&
       line != "threshold,precision,recall,f1,accuracy,tp,fn,fp,tn\r"))
    throw std::runtime_error(path + ": bad report header");
  std::vector<MetricsReport> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    MetricsReport r;
    unsigned long long tp = 0, fn = 0, fp = 0, tn = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%llu,%llu,%llu,%llu",
                    &r.threshold, &r.macro_precision, &r.macro_recall, &r.macro_f1,
                    &r.accuracy, &tp, &fn, &fp, &tn) != 9)
      throw std::runtime_error(path + ": malformed report row '" + line + "'");
    r.cm = {tp, fn, fp, tn};
    out.push_back(r);
  }
  if (out.empty()) throw std::runtime_error(path + ": report has no rows");
  return out;
}

std::string format_report_text(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "threshold %.3f | accuracy %.4f | macro P %.4f R %.4f F1 %.4f\n"
                "                     predicted similar   predicted dissimilar\n"
                "actually similar     %-19llu %llu\n"
                "actually dissimilar  %-19llu %llu\n",
                r.threshold, r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1,
                static_cast<unsigned long long>(r.cm.tp),
                static_cast<unsigned long long>(r.cm.fn),
                static_cast<unsigned long long>(r.cm.fp),
                static_cast<unsigned long long>(r.cm.tn));
  return buf;
}

PairF1Matrix pair_f1_matrix(const std::map<std::string, size_t>& species_sizes,
                            const std::vector<std::string>& row_species,
                            const std::vector<std::string>& col_species,
                            uint64_t pairs_per_cell, double threshold, uint64_t seed,
                            const PairScorer& scorer) {
  if (row_species.empty() || col_species.empty())
    throw std::runtime_error("pair matrix: row and column species lists must be nonempty");
  if (pairs_per_cell < 2)
    throw std::runtime_error("pair matrix: pairs_per_cell must be >= 2");
  auto size_of = [&species_sizes](const std::string& name) {
    auto it = species_sizes.find(name);
    if (it == species_sizes.end() || it->second == 0)
      throw std::runtime_error("pair matrix: species '" + name + "' has no samples");
    return it->second;
  };

  PairF1Matrix m;
  m.row_species = row_species;
  m.col_species = col_species;
  m.threshold = threshold;
  m.f1.resize(row_species.size() * col_species.size(), 0.0);
  m.pair_count.resize(m.f1.size(), 0);

  for (size_t r = 0; r < row_species.size(); ++r) {
    for (size_t c = 0; c < col_species.size(); ++c) {
      const std::string& sa = row_species[r];
      const std::string& sb = col_species[c];
      if (sa == sb)
        throw std::runtime_error("pair matrix: cell (" + sa + "," + sb +
                                 ") pairs a species with itself; negatives impossible");
      const size_t na = size_of(sa), nb = size_of(sb);
      if (na < 2 && nb < 2)
        throw std::runtime_error("pair matrix: cell (" + sa + "," + sb +
                                 "): neither species has 2 samples for positive pairs");
      Rng rng(derive_seed(seed, "pairmatrix", {static_cast<uint64_t>(r),
                                               static_cast<uint64_t>(c)}));
      const uint64_t n_neg = pairs_per_cell / 2;
      const uint64_t n_pos = pairs_per_cell - n_neg;
      std::vector<int> labels;
      std::vector<double> scores;
      labels.reserve(pairs_per_cell);
      scores.reserve(pairs_per_cell);
      auto draw_distinct = [&rng](size_t n, size_t& i, size_t& j) {
        i = rng.next_below(n);
        j = rng.next_below(n - 1);
        if (j >= i) ++j;
      };
      for (uint64_t p = 0; p < n_pos; ++p) {
        // alternate the source species when both can supply positives
        const bool use_a = na >= 2 && (nb < 2 || p % 2 == 0);
        const std::string& sp = use_a ? sa : sb;
        size_t i = 0, j = 0;
        draw_distinct(use_a ? na : nb, i, j);
        labels.push_back(0);
        scores.push_back(scorer(sp, i, sp, j));
      }
      for (uint64_t p = 0; p < n_neg; ++p) {
        const size_t i = rng.next_below(na);
        const size_t j = rng.next_below(nb);
        labels.push_back(1);
        scores.push_back(scorer(sa, i, sb, j));
      }
      const MetricsReport rep =
          metrics_from_confusion(confusion(labels, scores, threshold), threshold);
      m.f1[r * col_species.size() + c] = rep.macro_f1;
      m.pair_count[r * col_species.size() + c] = labels.size();
    }
  }
  return m;
}

void save_pair_f1(const PairF1Matrix& m, const std::string& path) {
  std::string out = "species";
  for (const auto& c : m.col_species) out += "," + c;
  out += "\n";
  for (size_t r = 0; r < m.row_species.size(); ++r) {
    out += m.row_species[r];
    for (size_t c = 0; c < m.col_species.size(); ++c) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), ",%.4f", m.f1[r * m.col_species.size() + c]);
      out += buf;
    }
    out += "\n";
  }
  char meta[96];
  std::snprintf(meta, sizeof(meta), "# pairs_per_cell=%llu threshold=%.6f\n",
                static_cast<unsigned long long>(
                    m.pair_count.empty() ? 0 : m.pair_count[0]),
                m.threshold);
  out += meta;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << out;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace snn
