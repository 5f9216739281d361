// Metrics tests: decision rule, confusion counting, macro-averaged reports
// against the reference verification rows, threshold sweeps, grid parsing,
// and the per-species-pair F1 matrix.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "snn/metrics.hpp"
#include "snn/rng.hpp"

using snn::ConfusionMatrix;
using snn::MetricsReport;
using snn::PairF1Matrix;
using snn::Rng;

namespace {

ConfusionMatrix cm_of(uint64_t tp, uint64_t fn, uint64_t fp, uint64_t tn) {
  ConfusionMatrix cm;
  cm.tp = tp;
  cm.fn = fn;
  cm.fp = fp;
  cm.tn = tn;
  return cm;
}

// Checks a report against a reference (precision, recall, f1, accuracy) row;
// the reference values were rounded to two decimals, so agreement is asserted
// within +/- 0.015 absolute.
void check_reference_row(const MetricsReport& r, double p, double rec, double f1,
                         double acc) {
  CHECK(std::fabs(r.macro_precision - p) <= 0.015);
  CHECK(std::fabs(r.macro_recall - rec) <= 0.015);
  CHECK(std::fabs(r.macro_f1 - f1) <= 0.015);
  CHECK(std::fabs(r.accuracy - acc) <= 0.015);
}

}  // namespace

TEST_CASE("decide: similar strictly below the threshold, ties dissimilar") {
  CHECK(snn::decide_similar(0.3, 0.5));
  CHECK_FALSE(snn::decide_similar(0.5, 0.5));  // tie -> dissimilar
  CHECK_FALSE(snn::decide_similar(0.9, 0.5));
  CHECK(snn::decide_similar(0.0, 0.1));
  CHECK_THROWS(snn::decide_similar(-0.01, 0.5));
}

TEST_CASE("confusion: hand-enumerated counts") {
  // All similar, all scored 0 -> everything lands in tp.
  auto all_sim = snn::confusion({0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, 0.5);
  CHECK(all_sim.tp == 5);
  CHECK(all_sim.fn == 0);
  CHECK(all_sim.fp == 0);
  CHECK(all_sim.tn == 0);

  // One of each outcome.
  auto mixed = snn::confusion({0, 0, 1, 1}, {0.1, 0.9, 0.1, 0.9}, 0.5);
  CHECK(mixed.tp == 1);
  CHECK(mixed.fn == 1);
  CHECK(mixed.fp == 1);
  CHECK(mixed.tn == 1);

  // Empty input -> all-zero matrix.
  auto empty = snn::confusion({}, {}, 0.5);
  CHECK(empty.total() == 0);

  CHECK_THROWS(snn::confusion({0, 1}, {0.5}, 0.5));       // length mismatch
  CHECK_THROWS(snn::confusion({0, 2}, {0.1, 0.2}, 0.5));  // label outside {0,1}
}

TEST_CASE("confusion: row totals are threshold-invariant") {
  Rng rng(3);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 500; ++i) {
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    scores.push_back(rng.uniform(0.0, 1.0));
  }
  uint64_t n_sim = 0;
  for (int y : labels) n_sim += y == 0 ? 1 : 0;
  for (double t : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    const auto cm = snn::confusion(labels, scores, t);
    CHECK(cm.tp + cm.fn == n_sim);
    CHECK(cm.fp + cm.tn == labels.size() - n_sim);
  }
}

TEST_CASE("metrics: zero-shot benchmark matrix (24,18,15,27)") {
  const MetricsReport r = snn::metrics_from_confusion(cm_of(24, 18, 15, 27), 0.5);
  // Exact arithmetic: accuracy 51/84, macro P = (24/39 + 27/45)/2, macro
  // R = (24/42 + 27/42)/2.
  CHECK(r.accuracy == doctest::Approx(51.0 / 84.0).epsilon(1e-12));
  CHECK(r.macro_precision == doctest::Approx((24.0 / 39.0 + 27.0 / 45.0) / 2).epsilon(1e-12));
  CHECK(r.macro_recall == doctest::Approx((24.0 / 42.0 + 27.0 / 42.0) / 2).epsilon(1e-12));
  // Published row: 0.61 across precision, recall, F1, accuracy.
  check_reference_row(r, 0.61, 0.61, 0.61, 0.61);
}

TEST_CASE("metrics: whole-test-set matrix (61,29,43,47)") {
  const MetricsReport r = snn::metrics_from_confusion(cm_of(61, 29, 43, 47), 0.5);
  CHECK(r.accuracy == doctest::Approx(108.0 / 180.0).epsilon(1e-12));  // exactly 0.60
  // Published row: 0.61 / 0.60 / 0.60 / 0.60.
  check_reference_row(r, 0.61, 0.60, 0.60, 0.60);
}

TEST_CASE("metrics: seen-species matrix (3725,1267,1514,3478)") {
  const MetricsReport r = snn::metrics_from_confusion(cm_of(3725, 1267, 1514, 3478), 0.5);
  CHECK(r.accuracy == doctest::Approx(7203.0 / 9984.0).epsilon(1e-12));
  // Published row: 0.73 / 0.72 / 0.72 / 0.72.
  check_reference_row(r, 0.73, 0.72, 0.72, 0.72);
}

TEST_CASE("metrics: validation matrix (3197,1123,1243,3077)") {
  const MetricsReport r = snn::metrics_from_confusion(cm_of(3197, 1123, 1243, 3077), 0.5);
  // Published row: 0.73 / 0.72 / 0.73 / 0.72.
  check_reference_row(r, 0.73, 0.72, 0.73, 0.72);
}

TEST_CASE("metrics: degenerate and invalid matrices") {
  // All dissimilar, all predicted dissimilar: similar-class precision and
  // recall fall back to 0, accuracy is still perfect.
  const MetricsReport r = snn::metrics_from_confusion(cm_of(0, 0, 0, 4), 0.5);
  CHECK(r.similar.precision == 0.0);
  CHECK(r.similar.recall == 0.0);
  CHECK(r.similar.f1 == 0.0);
  CHECK(r.dissimilar.precision == 1.0);
  CHECK(r.dissimilar.recall == 1.0);
  CHECK(r.accuracy == 1.0);

  CHECK_THROWS(snn::metrics_from_confusion(cm_of(0, 0, 0, 0), 0.5));
}

TEST_CASE("metrics: every reported value lies in [0,1]") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    ConfusionMatrix cm = cm_of(rng.next_below(50), rng.next_below(50),
                               rng.next_below(50), rng.next_below(50));
    if (cm.total() == 0) continue;
    const MetricsReport r = snn::metrics_from_confusion(cm, 0.5);
    for (double v : {r.similar.precision, r.similar.recall, r.similar.f1,
                     r.dissimilar.precision, r.dissimilar.recall, r.dissimilar.f1,
                     r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(r.accuracy ==
          doctest::Approx(static_cast<double>(cm.tp + cm.tn) / cm.total()));
  }
}

TEST_CASE("metrics: scale-invariant in the counts") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const uint64_t tp = 1 + rng.next_below(40), fn = 1 + rng.next_below(40);
    const uint64_t fp = 1 + rng.next_below(40), tn = 1 + rng.next_below(40);
    const MetricsReport a = snn::metrics_from_confusion(cm_of(tp, fn, fp, tn), 0.5);
    const uint64_t k = 2 + rng.next_below(9);
    const MetricsReport b =
        snn::metrics_from_confusion(cm_of(k * tp, k * fn, k * fp, k * tn), 0.5);
    CHECK(a.macro_precision == doctest::Approx(b.macro_precision).epsilon(1e-12));
    CHECK(a.macro_recall == doctest::Approx(b.macro_recall).epsilon(1e-12));
    CHECK(a.macro_f1 == doctest::Approx(b.macro_f1).epsilon(1e-12));
    CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
  }
}

TEST_CASE("metrics: perfect separation scores give macro F1 exactly 1") {
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 40; ++i) {
    labels.push_back(i % 2);
    scores.push_back(i % 2 == 0 ? 0.1 : 0.9);
  }
  const MetricsReport r =
      snn::metrics_from_confusion(snn::confusion(labels, scores, 0.5), 0.5);
  CHECK(r.macro_f1 == 1.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("metrics: constant scores on balanced labels score exactly 0.5") {
  std::vector<int> labels;
  std::vector<double> scores(60, 0.42);
  for (int i = 0; i < 60; ++i) labels.push_back(i % 2);
  for (double t : {0.2, 0.42, 0.9}) {
    const MetricsReport r =
        snn::metrics_from_confusion(snn::confusion(labels, scores, t), t);
    CHECK(r.accuracy == 0.5);
  }
}

TEST_CASE("grid: inclusive start:stop:step parsing") {
  const auto grid = snn::parse_grid("0.1:0.9:0.1");
  REQUIRE(grid.size() == 9);
  for (size_t i = 0; i < 9; ++i)
    CHECK(grid[i] == doctest::Approx(0.1 * static_cast<double>(i + 1)));
  const auto one = snn::parse_grid("0.5:0.5:0.1");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(0.5));

  CHECK_THROWS(snn::parse_grid("abc"));
  CHECK_THROWS(snn::parse_grid("0.1:0.9"));
  CHECK_THROWS(snn::parse_grid("0.9:0.1:0.1"));   // start exceeds stop
  CHECK_THROWS(snn::parse_grid("0.1:0.9:0"));     // step must be positive
  CHECK_THROWS(snn::parse_grid("0.1:0.9:-0.1"));
  CHECK_THROWS(snn::parse_grid("-0.5:0.9:0.1"));  // negative threshold
}

TEST_CASE("sweep: one ordered report per grid value") {
  Rng rng(11);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 400; ++i) {
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    scores.push_back(rng.uniform(0.0, 1.0));
  }
  const auto grid = snn::parse_grid("0.1:0.9:0.1");
  const auto reports = snn::threshold_sweep(labels, scores, grid);
  REQUIRE(reports.size() == 9);
  for (size_t i = 0; i < reports.size(); ++i) {
    CHECK(reports[i].threshold == doctest::Approx(grid[i]));
    if (i > 0) CHECK(reports[i].threshold > reports[i - 1].threshold);
  }

  // Raising the threshold never decreases the similar-side counts: tn+fn
  // (predicted dissimilar) is non-increasing as the threshold grows, and the
  // actual-class totals never move.
  for (size_t i = 1; i < reports.size(); ++i) {
    const auto& prev = reports[i - 1].cm;
    const auto& cur = reports[i].cm;
    CHECK(cur.tn + cur.fn <= prev.tn + prev.fn);
    CHECK(cur.tp + cur.fn == prev.tp + prev.fn);
    CHECK(cur.fp + cur.tn == prev.fp + prev.tn);
  }
}

TEST_CASE("sweep: all-zero scores predict similar at every positive threshold") {
  std::vector<int> labels = {0, 1, 0, 1, 0, 1};
  std::vector<double> scores(6, 0.0);
  const auto reports = snn::threshold_sweep(labels, scores, {0.25, 0.5, 0.75});
  for (const auto& r : reports) {
    CHECK(r.cm.tp == 3);
    CHECK(r.cm.fp == 3);
    CHECK(r.cm.fn == 0);
    CHECK(r.cm.tn == 0);
  }
}

TEST_CASE("sweep: single-value grid equals the direct computation") {
  Rng rng(13);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 100; ++i) {
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    scores.push_back(rng.uniform(0.0, 1.0));
  }
  const auto swept = snn::threshold_sweep(labels, scores, {0.4});
  REQUIRE(swept.size() == 1);
  const MetricsReport direct =
      snn::metrics_from_confusion(snn::confusion(labels, scores, 0.4), 0.4);
  CHECK(swept[0].cm.tp == direct.cm.tp);
  CHECK(swept[0].cm.fn == direct.cm.fn);
  CHECK(swept[0].cm.fp == direct.cm.fp);
  CHECK(swept[0].cm.tn == direct.cm.tn);
  CHECK(swept[0].macro_f1 == doctest::Approx(direct.macro_f1).epsilon(1e-12));
  CHECK_THROWS(snn::threshold_sweep(labels, scores, {}));
}

TEST_CASE("reports: CSV round-trip preserves every field") {
  Rng rng(17);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 300; ++i) {
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    scores.push_back(rng.uniform(0.0, 1.0));
  }
  const auto reports =
      snn::threshold_sweep(labels, scores, snn::parse_grid("0.1:0.9:0.1"));
  const std::string path =
      (std::filesystem::temp_directory_path() / "snn_metrics_reports.csv").string();
  snn::save_reports_csv(reports, path);
  const auto loaded = snn::load_reports_csv(path);
  REQUIRE(loaded.size() == reports.size());
  for (size_t i = 0; i < reports.size(); ++i) {
    CHECK(loaded[i].threshold == doctest::Approx(reports[i].threshold));
    CHECK(loaded[i].cm.tp == reports[i].cm.tp);
    CHECK(loaded[i].cm.fn == reports[i].cm.fn);
    CHECK(loaded[i].cm.fp == reports[i].cm.fp);
    CHECK(loaded[i].cm.tn == reports[i].cm.tn);
    CHECK(loaded[i].macro_f1 == doctest::Approx(reports[i].macro_f1).epsilon(1e-6));
    CHECK(loaded[i].accuracy == doctest::Approx(reports[i].accuracy).epsilon(1e-6));
  }
  std::remove(path.c_str());
}

TEST_CASE("report text: carries the headline numbers") {
  const MetricsReport r = snn::metrics_from_confusion(cm_of(24, 18, 15, 27), 0.5);
  const std::string text = snn::format_report_text(r);
  CHECK(text.find("threshold") != std::string::npos);
  CHECK(text.find("accuracy") != std::string::npos);
  CHECK(text.find("0.5") != std::string::npos);
}

namespace {

// Deterministic stand-in scorer: same-species pairs score low, cross-species
// pairs high, so every cell separates perfectly at threshold 0.5.
double separating_scorer(const std::string& a, size_t, const std::string& b, size_t) {
  return a == b ? 0.1 : 0.9;
}

// Pseudo-random but deterministic scorer keyed on species names and indices.
double hashed_scorer(const std::string& a, size_t ia, const std::string& b, size_t ib) {
  size_t h = std::hash<std::string>{}(a) * 31 + ia;
  h = h * 131 + std::hash<std::string>{}(b) * 31 + ib;
  return static_cast<double>(h % 1000) / 1000.0;
}

}  // namespace

TEST_CASE("pair matrix: 5x5 grid shape with balanced cells") {
  std::map<std::string, size_t> sizes;
  const std::vector<std::string> rows = {"r1", "r2", "r3", "r4", "r5"};
  const std::vector<std::string> cols = {"c1", "c2", "c3", "c4", "c5"};
  for (const auto& s : rows) sizes[s] = 20;
  for (const auto& s : cols) sizes[s] = 20;
  const PairF1Matrix m =
      snn::pair_f1_matrix(sizes, rows, cols, 40, 0.5, 1, hashed_scorer);
  CHECK(m.row_species == rows);
  CHECK(m.col_species == cols);
  REQUIRE(m.f1.size() == 25);
  REQUIRE(m.pair_count.size() == 25);
  for (double v : m.f1) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (uint64_t n : m.pair_count) CHECK(n == 40);
}

TEST_CASE("pair matrix: perfect separation scores 1.00 in every cell") {
  std::map<std::string, size_t> sizes = {{"a", 10}, {"b", 10}, {"c", 3}};
  const PairF1Matrix m = snn::pair_f1_matrix(sizes, {"a", "c"}, {"b"}, 20, 0.5, 2,
                                             separating_scorer);
  REQUIRE(m.f1.size() == 2);
  CHECK(m.f1[0] == 1.0);
  CHECK(m.f1[1] == 1.0);
}

TEST_CASE("pair matrix: deterministic per seed") {
  std::map<std::string, size_t> sizes = {{"a", 15}, {"b", 8}, {"c", 30}, {"d", 2}};
  const std::vector<std::string> rows = {"a", "b"};
  const std::vector<std::string> cols = {"c", "d"};
  const PairF1Matrix m1 = snn::pair_f1_matrix(sizes, rows, cols, 30, 0.5, 9, hashed_scorer);
  const PairF1Matrix m2 = snn::pair_f1_matrix(sizes, rows, cols, 30, 0.5, 9, hashed_scorer);
  CHECK(m1.f1 == m2.f1);
  const PairF1Matrix m3 = snn::pair_f1_matrix(sizes, rows, cols, 30, 0.5, 10, hashed_scorer);
  CHECK(m1.f1 != m3.f1);  // a fresh seed draws different pairs
}

TEST_CASE("pair matrix: invalid cells are rejected") {
  std::map<std::string, size_t> sizes = {{"a", 10}, {"b", 10}};
  CHECK_THROWS(snn::pair_f1_matrix(sizes, {"a"}, {"a"}, 20, 0.5, 1, hashed_scorer));
  CHECK_THROWS(snn::pair_f1_matrix(sizes, {"a"}, {"ghost"}, 20, 0.5, 1, hashed_scorer));
  CHECK_THROWS(snn::pair_f1_matrix(sizes, {}, {"b"}, 20, 0.5, 1, hashed_scorer));
  CHECK_THROWS(snn::pair_f1_matrix(sizes, {"a"}, {"b"}, 1, 0.5, 1, hashed_scorer));
}
