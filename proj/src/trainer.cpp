#include "snn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "snn/loss.hpp"

namespace snn {

namespace {

// Adam with bias correction. Moment buffers live here, parameters stay in
// the model; there is exactly one copy of each parameter tensor.
class Adam {
 public:
  Adam(const ModelParams& p, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& t : p.tensors)
      slots_.push_back({std::vector<float>(t.value->size(), 0.0f),
                        std::vector<float>(t.value->size(), 0.0f)});
  }

  void step(ModelParams& p) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < p.tensors.size(); ++i) {
      Tensor& theta = *p.tensors[i].value;
      const std::vector<float>& g = theta.grad();  // backward always populates
      auto& [m, v] = slots_[i];
      float* w = theta.data();
      for (size_t j = 0; j < g.size(); ++j) {
        const double gj = g[j];
        const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<float>(mj);
        v[j] = static_cast<float>(vj);
        w[j] -= static_cast<float>(cfg_.learning_rate * (mj / bc1) /
                                   (std::sqrt(vj / bc2) + cfg_.epsilon));
      }
    }
  }

 private:
  TrainConfig cfg_;
  uint64_t t_ = 0;
  std::vector<std::pair<std::vector<float>, std::vector<float>>> slots_;
};

// Stack the two members of each pair into one [2B, ...] batch: rows 0..B-1
// hold the first members, rows B..2B-1 the second, so the twin branches ride
// through a single shared-weight forward pass.
Tensor assemble_image_batch(const Dataset& ds, const std::vector<PairSample>& pairs,
                            size_t from, size_t to, uint32_t side, Rng* aug_rng) {
  const size_t b = to - from;
  Tensor batch({2 * b, side, side, 3});
  const size_t stride = static_cast<size_t>(side) * side * 3;
  for (size_t i = 0; i < b; ++i) {
    const PairSample& pr = pairs[from + i];
    for (int member = 0; member < 2; ++member) {
      const Tensor& px = ds.pixels(ds.index_of(member == 0 ? pr.id_a : pr.id_b));
      if (px.dim(0) != side || px.dim(1) != side)
        throw std::runtime_error("train: image for '" +
                                 (member == 0 ? pr.id_a : pr.id_b) + "' is " +
                                 std::to_string(px.dim(0)) + "x" + std::to_string(px.dim(1)) +
                                 ", configured input size is " + std::to_string(side));
      const Tensor view = aug_rng ? augment(px, *aug_rng) : px;
      std::copy(view.data(), view.data() + stride,
                batch.data() + (member * b + i) * stride);
    }
  }
  return batch;
}

Tensor assemble_feature_batch(const EmbeddingStore& feats,
                              const std::vector<PairSample>& pairs, size_t from,
                              size_t to) {
  const size_t b = to - from;
  Tensor batch({2 * b, feats.dim});
  for (size_t i = 0; i < b; ++i) {
    const PairSample& pr = pairs[from + i];
    const auto& va = feats.find(pr.id_a);
    const auto& vb = feats.find(pr.id_b);
    std::copy(va.begin(), va.end(), batch.data() + i * feats.dim);
    std::copy(vb.begin(), vb.end(), batch.data() + (b + i) * feats.dim);
  }
  return batch;
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
  if (cfg.max_epochs < 1) throw std::runtime_error("config: max_epochs must be >= 1");
  if (cfg.patience < 1) throw std::runtime_error("config: patience must be >= 1");
  if (cfg.batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
  if (!(cfg.learning_rate >= 0))
    throw std::runtime_error("config: learning_rate must be >= 0");
  if (!(cfg.margin > 0)) throw std::runtime_error("config: margin must be > 0");
  if (!(cfg.dropout >= 0) || cfg.dropout >= 1)
    throw std::runtime_error("config: dropout must lie in [0,1)");
  if (!(cfg.pos_ratio >= 0) || cfg.pos_ratio > 1)
    throw std::runtime_error("config: pos_ratio must lie in [0,1]");
  if (cfg.backbone == Backbone::kBuiltin && cfg.input_size < 8)
    throw std::runtime_error("config: input_size must be >= 8");
  if (!(cfg.eval_threshold >= 0))
    throw std::runtime_error("config: eval_threshold must be >= 0");
}

TrainResult train(const Dataset& ds, const SplitManifest& split, const TrainConfig& cfg,
                  const EmbeddingStore* features) {
  validate_config(cfg);
  const size_t n_train = split.count(Partition::kTrain);
  const size_t n_val = split.count(Partition::kValidation);
  if (n_train == 0) throw std::runtime_error("train: train partition is empty");
  if (n_val == 0) throw std::runtime_error("train: validation partition is empty");
  if (cfg.backbone == Backbone::kPrecomputed && features == nullptr)
    throw std::runtime_error("train: precomputed backbone requires attached embeddings");
  if (cfg.backbone == Backbone::kBuiltin && features != nullptr)
    throw std::runtime_error("train: embeddings attached but backbone is builtin");

  const uint64_t pairs_per_epoch =
      cfg.pairs_per_epoch > 0
          ? cfg.pairs_per_epoch
          : std::min<uint64_t>(4 * static_cast<uint64_t>(n_train), 50000);
  const uint64_t val_pairs =
      cfg.val_pairs > 0
          ? cfg.val_pairs
          : std::clamp<uint64_t>(2 * static_cast<uint64_t>(n_val), 64, 4096);

  Rng init_rng(derive_seed(cfg.seed, "init"));
  ModelParams params = init_model<float>(
      cfg.backbone, cfg.input_size, 3, features ? features->dim : 0, cfg.normalize,
      cfg.dropout, init_rng);

  // fixed validation pair set; the stopping criterion must not drift
  const std::vector<PairSample> val_set =
      sample_pairs(ds, split, Partition::kValidation, Scope::kAll, val_pairs,
                   cfg.pos_ratio, derive_seed(cfg.seed, "valpairs"));
  std::vector<size_t> val_rows;
  {
    std::unordered_set<size_t> seen_rows;
    for (const auto& pr : val_set) {
      for (const auto* id : {&pr.id_a, &pr.id_b}) {
        const size_t row = ds.index_of(*id);
        if (seen_rows.insert(row).second) val_rows.push_back(row);
      }
    }
  }

  Adam opt(params, cfg);
  EarlyStopMonitor monitor(cfg.patience);
  TrainLog log;
  ModelParams best = clone_model(params);

  for (uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto pairs =
        sample_pairs(ds, split, Partition::kTrain, Scope::kAll, pairs_per_epoch,
                     cfg.pos_ratio, derive_seed(cfg.seed, "epoch", {epoch}));

    double loss_sum = 0;
    size_t batch_index = 0;
    for (size_t from = 0; from < pairs.size(); from += cfg.batch_size, ++batch_index) {
      const size_t to = std::min(pairs.size(), from + cfg.batch_size);
      Rng aug_rng(derive_seed(cfg.seed, "augment", {epoch, batch_index}));
      Rng drop_rng(derive_seed(cfg.seed, "dropout", {epoch, batch_index}));

      Tape tape;
      auto input = tape.leaf(cfg.backbone == Backbone::kBuiltin
                                 ? assemble_image_batch(ds, pairs, from, to,
                                                        cfg.input_size, &aug_rng)
                                 : assemble_feature_batch(*features, pairs, from, to));
      auto emb = embed_on_tape(tape, params, input, Mode::kTrain, drop_rng);
      std::vector<int> labels;
      labels.reserve(to - from);
      for (size_t i = from; i < to; ++i) labels.push_back(pairs[i].label);
      auto loss = contrastive_pair_loss(tape, emb, labels, static_cast<float>(cfg.margin));
      const double loss_value = (*loss)[0];
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      tape.backward(loss);
      opt.step(params);
      loss_sum += loss_value * static_cast<double>(to - from);
    }
    const double train_loss = loss_sum / static_cast<double>(pairs.size());

    // validation: embed in inference mode, then loss + F1 over the fixed set
    const EmbeddingStore val_emb = embed_samples(params, ds, features, val_rows);
    double val_loss_sum = 0;
    std::vector<int> val_labels;
    std::vector<double> val_scores;
    val_labels.reserve(val_set.size());
    val_scores.reserve(val_set.size());
    for (const auto& pr : val_set) {
      const float d = energy(val_emb.find(pr.id_a), val_emb.find(pr.id_b));
      val_loss_sum += contrastive_loss(static_cast<double>(d), pr.label, cfg.margin);
      val_labels.push_back(pr.label);
      val_scores.push_back(similarity_score(d, params.normalize));
    }
    const double val_loss = val_loss_sum / static_cast<double>(val_set.size());
    const MetricsReport val_report = metrics_from_confusion(
        confusion(val_labels, val_scores, cfg.eval_threshold), cfg.eval_threshold);

    if (monitor.observe(val_loss)) best = clone_model(params);
    log.epochs.push_back({epoch, train_loss, val_loss, val_report.macro_f1,
                          monitor.stale()});
    if (monitor.should_stop()) break;
  }

  log.best_epoch = monitor.best_epoch();
  log.best_val_loss = monitor.best();
  return {std::move(best), std::move(log)};
}

void save_train_log(const TrainLog& log, const std::string& path) {
  std::string out = "epoch,train_loss,val_loss,val_f1,stale_epochs\n";
  for (const auto& e : log.epochs) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%u,%.6f,%.6f,%.6f,%u\n", e.epoch, e.train_loss,
                  e.val_loss, e.val_f1, e.stale_epochs);
    out += buf;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << out;
  if (!f) throw std::runtime_error("write failed: " + path);
}

EmbeddingStore embed_samples(const ModelParams& p, const Dataset& ds,
                             const EmbeddingStore* features,
                             const std::vector<size_t>& rows) {
  if (p.backbone == Backbone::kPrecomputed && features == nullptr)
    throw std::runtime_error("embed: precomputed backbone requires attached embeddings");
  EmbeddingStore out;
  constexpr size_t kChunk = 128;
  for (size_t from = 0; from < rows.size(); from += kChunk) {
    const size_t to = std::min(rows.size(), from + kChunk);
    const size_t b = to - from;
    Tensor input;
    if (p.backbone == Backbone::kBuiltin) {
      const size_t stride = p.input_size * p.input_size * p.channels;
      input = Tensor({b, p.input_size, p.input_size, p.channels});
      for (size_t i = 0; i < b; ++i) {
        const Tensor& px = ds.pixels(rows[from + i]);
        if (px.dim(0) != p.input_size || px.dim(1) != p.input_size)
          throw std::runtime_error("embed: image for '" + ds.row(rows[from + i]).id +
                                   "' is " + std::to_string(px.dim(0)) + "x" +
                                   std::to_string(px.dim(1)) + ", model expects " +
                                   std::to_string(p.input_size));
        std::copy(px.data(), px.data() + stride, input.data() + i * stride);
      }
    } else {
      input = Tensor({b, features->dim});
      for (size_t i = 0; i < b; ++i) {
        const auto& v = features->find(ds.row(rows[from + i]).id);
        std::copy(v.begin(), v.end(), input.data() + i * features->dim);
      }
    }
    const Tensor emb = embed_infer(p, std::move(input));
    for (size_t i = 0; i < b; ++i) {
      std::vector<float> v(emb.data() + i * kEmbeddingDim,
                           emb.data() + (i + 1) * kEmbeddingDim);
      out.add(ds.row(rows[from + i]).id, std::move(v));
    }
  }
  return out;
}

EvalOutcome evaluate_model(const ModelParams& p, const Dataset& ds,
                           const EmbeddingStore* features,
                           const std::vector<PairSample>& pairs, double threshold) {
  if (pairs.empty()) throw std::runtime_error("evaluate: pair list is empty");
  std::vector<size_t> rows;
  std::unordered_set<size_t> seen_rows;
  for (const auto& pr : pairs)
    for (const auto* id : {&pr.id_a, &pr.id_b}) {
      const size_t row = ds.index_of(*id);
      if (seen_rows.insert(row).second) rows.push_back(row);
    }
  const EmbeddingStore emb = embed_samples(p, ds, features, rows);

  EvalOutcome out;
  out.pairs = pairs;
  std::vector<int> labels;
  labels.reserve(pairs.size());
  out.scores.reserve(pairs.size());
  for (const auto& pr : pairs) {
    const float d = energy(emb.find(pr.id_a), emb.find(pr.id_b));
    out.scores.push_back(similarity_score(d, p.normalize));
    labels.push_back(pr.label);
  }
  out.report = metrics_from_confusion(confusion(labels, out.scores, threshold), threshold);
  return out;
}

EvalOutcome evaluate_scope(const ModelParams& p, const Dataset& ds,
                           const SplitManifest& split, const EmbeddingStore* features,
                           Partition part, Scope scope, size_t n_pairs,
                           double threshold, uint64_t seed) {
  const auto pairs = sample_pairs(ds, split, part, scope, n_pairs, 0.5, seed);
  return evaluate_model(p, ds, features, pairs, threshold);
}

ProtocolReports evaluate_protocols(const ModelParams& p, const Dataset& ds,
                                   const SplitManifest& split,
                                   const EmbeddingStore* features, size_t n_pairs,
                                   double threshold, uint64_t seed) {
  if (split.unseen_species().empty())
    throw std::runtime_error("protocols: split contains no unseen species");
  ProtocolReports out;
  out.seen = evaluate_scope(p, ds, split, features, Partition::kTest, Scope::kSeen,
                            n_pairs, threshold, derive_seed(seed, "eval:seen"))
                 .report;
  out.unseen = evaluate_scope(p, ds, split, features, Partition::kTest, Scope::kUnseen,
                              n_pairs, threshold, derive_seed(seed, "eval:unseen"))
                   .report;
  out.all = evaluate_scope(p, ds, split, features, Partition::kTest, Scope::kAll,
                           n_pairs, threshold, derive_seed(seed, "eval:all"))
                .report;
  return out;
}

PairF1Matrix pair_f1_matrix_for_model(const ModelParams& p, const Dataset& ds,
                                      const EmbeddingStore* features,
                                      const std::vector<std::string>& row_species,
                                      const std::vector<std::string>& col_species,
                                      uint64_t pairs_per_cell, double threshold,
                                      uint64_t seed) {
  // samples per species in dataset row order
  std::map<std::string, std::vector<size_t>> members;
  for (size_t i = 0; i < ds.size(); ++i) members[ds.row(i).species].push_back(i);

  std::map<std::string, size_t> sizes;
  std::vector<size_t> rows;
  auto need = [&](const std::string& name) {
    if (sizes.count(name)) return;
    auto it = members.find(name);
    if (it == members.end())
      throw std::runtime_error("pair matrix: species '" + name + "' absent from dataset");
    sizes[name] = it->second.size();
    rows.insert(rows.end(), it->second.begin(), it->second.end());
  };
  for (const auto& s : row_species) need(s);
  for (const auto& s : col_species) need(s);

  const EmbeddingStore emb = embed_samples(p, ds, features, rows);
  const bool normalize = p.normalize;
  PairScorer scorer = [&members, &emb, &ds, normalize](const std::string& sa, size_t ia,
                                                       const std::string& sb, size_t ib) {
    const auto& va = emb.find(ds.row(members.at(sa)[ia]).id);
    const auto& vb = emb.find(ds.row(members.at(sb)[ib]).id);
    return similarity_score(energy(va, vb), normalize);
  };
  return pair_f1_matrix(sizes, row_species, col_species, pairs_per_cell, threshold,
                        seed, scorer);
}

}  // namespace snn
