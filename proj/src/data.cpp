#include "snn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "snn/binio.hpp"

namespace fs = std::filesystem;

namespace snn {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  size_t pos = 0;
  while (true) {
    const size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

uint64_t pack_pair_key(size_t a, size_t b) {
  const uint64_t lo = a < b ? a : b;
  const uint64_t hi = a < b ? b : a;
  return (lo << 32) | hi;
}

}  // namespace

// --- dataset -----------------------------------------------------------------

Dataset Dataset::load_manifest(const std::string& manifest_path) {
  const auto lines = read_lines(manifest_path);
  if (lines.empty() || lines[0] != "id,species,path")
    throw std::runtime_error(manifest_path +
                             ": manifest must start with header 'id,species,path'");
  Dataset ds;
  ds.dir_ = fs::path(manifest_path).parent_path().string();
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;  // tolerate a trailing blank line
    auto fields = split_csv(lines[i]);
    if (fields.size() != 3)
      throw std::runtime_error(manifest_path + ": line " + std::to_string(i + 1) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected 3");
    for (const auto& f : fields)
      if (f.empty())
        throw std::runtime_error(manifest_path + ": line " + std::to_string(i + 1) +
                                 " has an empty field");
    if (!ds.by_id_.emplace(fields[0], ds.rows_.size()).second)
      throw std::runtime_error(manifest_path + ": duplicate id '" + fields[0] + "'");
    ds.rows_.push_back({fields[0], fields[1], fields[2]});
  }
  // A header-only manifest is a valid empty dataset; emptiness only becomes
  // an error where a split or pair draw actually needs samples.
  ds.cache_.resize(ds.rows_.size());
  return ds;
}

size_t Dataset::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end())
    throw std::runtime_error("dataset: unknown sample id '" + id + "'");
  return it->second;
}

std::string Dataset::resolved_path(size_t i) const {
  const fs::path p(rows_[i].path);
  if (p.is_absolute()) return p.string();
  return (fs::path(dir_) / p).string();
}

const Tensor& Dataset::pixels(size_t i) const {
  if (!cache_[i]) {
    Tensor t = decode_image_file(resolved_path(i));
    if (resolution_) {
      if (t.dim(0) != resolution_->first || t.dim(1) != resolution_->second)
        throw std::runtime_error("dataset: image '" + rows_[i].id + "' is " +
                                 std::to_string(t.dim(0)) + "x" + std::to_string(t.dim(1)) +
                                 ", dataset resolution is " +
                                 std::to_string(resolution_->first) + "x" +
                                 std::to_string(resolution_->second));
    } else {
      resolution_ = {t.dim(0), t.dim(1)};
    }
    cache_[i] = std::move(t);
  }
  return *cache_[i];
}

SpeciesCatalog Dataset::catalog(uint64_t min_count, const std::string& unseen_prefix) const {
  std::map<std::string, uint64_t> counts;
  for (const auto& r : rows_) ++counts[r.species];
  SpeciesCatalog cat;
  for (const auto& [name, count] : counts) {
    const bool by_prefix =
        !unseen_prefix.empty() && name.rfind(unseen_prefix, 0) == 0;
    cat.species.push_back({name, count, count < min_count || by_prefix});
  }
  return cat;
}

// --- split --------------------------------------------------------------------

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kValidation: return "validation";
    case Partition::kTest: return "test";
  }
  return "?";
}

Partition parse_partition(const std::string& s) {
  if (s == "train") return Partition::kTrain;
  if (s == "validation") return Partition::kValidation;
  if (s == "test") return Partition::kTest;
  throw std::runtime_error("unknown partition '" + s + "'");
}

size_t SplitManifest::count(Partition p) const {
  size_t n = 0;
  for (const auto& e : entries) n += e.part == p ? 1 : 0;
  return n;
}

std::vector<std::string> SplitManifest::unseen_species() const {
  std::map<std::string, bool> trained;  // species -> appears in train/val
  for (const auto& e : entries) {
    auto [it, _] = trained.emplace(e.species, false);
    if (e.part != Partition::kTest) it->second = true;
  }
  std::vector<std::string> out;
  for (const auto& [name, seen] : trained)
    if (!seen) out.push_back(name);
  return out;
}

bool SplitManifest::is_unseen(const std::string& species) const {
  bool found = false;
  for (const auto& e : entries)
    if (e.species == species) {
      found = true;
      if (e.part != Partition::kTest) return false;
    }
  if (!found) throw std::runtime_error("split: unknown species '" + species + "'");
  return true;
}

SplitManifest make_split(const Dataset& ds, const SplitParams& params) {
  if (params.min_count == 0)
    throw std::runtime_error("split: min_count must be >= 1");
  if (!(params.test_frac >= 0.0) || params.test_frac >= 1.0 ||
      !(params.val_frac >= 0.0) || params.val_frac >= 1.0)
    throw std::runtime_error("split: fractions must lie in [0,1)");

  const SpeciesCatalog cat = ds.catalog(params.min_count, params.unseen_prefix);
  if (cat.species.empty()) throw std::runtime_error("split: species catalog is empty");
  if (cat.unseen_count() == cat.species.size())
    throw std::runtime_error("split: every species falls below min_count; "
                             "no seen species left to train on");

  // sample indices per species, in manifest order
  std::map<std::string, std::vector<size_t>> members;
  for (size_t i = 0; i < ds.size(); ++i) members[ds.row(i).species].push_back(i);

  std::vector<Partition> assign(ds.size(), Partition::kTest);
  size_t n_train = 0, n_val = 0;
  for (const auto& info : cat.species) {
    auto& idx = members[info.name];
    if (info.unseen) continue;  // whole species already assigned to test
    Rng rng(derive_seed(params.seed, "split:" + info.name));
    rng.shuffle(idx);
    const size_t n = idx.size();
    const size_t test_n = static_cast<size_t>(std::floor(params.test_frac * static_cast<double>(n)));
    const size_t rest = n - test_n;
    const size_t val_n = static_cast<size_t>(std::floor(params.val_frac * static_cast<double>(rest)));
    for (size_t j = 0; j < n; ++j) {
      if (j < test_n) {
        assign[idx[j]] = Partition::kTest;
      } else if (j < test_n + val_n) {
        assign[idx[j]] = Partition::kValidation;
        ++n_val;
      } else {
        assign[idx[j]] = Partition::kTrain;
        ++n_train;
      }
    }
  }
  if (n_train == 0) throw std::runtime_error("split: train partition is empty");
  if (n_val == 0) throw std::runtime_error("split: validation partition is empty");

  SplitManifest split;
  split.params = params;
  split.entries.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i)
    split.entries.push_back({ds.row(i).id, ds.row(i).species, assign[i]});
  return split;
}

void save_split(const SplitManifest& split, const std::string& path) {
  std::string out = "id,species,partition\n";
  for (const auto& e : split.entries)
    out += e.id + "," + e.species + "," + partition_name(e.part) + "\n";
  out += "# min_count=" + std::to_string(split.params.min_count) + "\n";
  out += "# test_frac=" + format_double(split.params.test_frac) + "\n";
  out += "# val_frac=" + format_double(split.params.val_frac) + "\n";
  if (!split.params.unseen_prefix.empty())
    out += "# unseen_prefix=" + split.params.unseen_prefix + "\n";
  out += "# seed=" + std::to_string(split.params.seed) + "\n";
  write_text(path, out);
}

SplitManifest load_split(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "id,species,partition")
    throw std::runtime_error(path + ": split must start with header 'id,species,partition'");
  SplitManifest split;
  std::unordered_set<std::string> ids;
  bool in_comments = false;
  for (size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (line[0] == '#') {
      in_comments = true;
      // best-effort parameter recovery from "# key=value"
      size_t start = line.find_first_not_of("# ");
      if (start == std::string::npos) continue;
      const size_t eq = line.find('=', start);
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(start, eq - start);
      const std::string value = line.substr(eq + 1);
      try {
        if (key == "min_count") split.params.min_count = std::stoull(value);
        else if (key == "test_frac") split.params.test_frac = std::stod(value);
        else if (key == "val_frac") split.params.val_frac = std::stod(value);
        else if (key == "unseen_prefix") split.params.unseen_prefix = value;
        else if (key == "seed") split.params.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": malformed comment parameter '" + line + "'");
      }
      continue;
    }
    if (in_comments)
      throw std::runtime_error(path + ": data row after comment block at line " +
                               std::to_string(i + 1));
    auto fields = split_csv(line);
    if (fields.size() != 3)
      throw std::runtime_error(path + ": line " + std::to_string(i + 1) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected 3");
    if (!ids.insert(fields[0]).second)
      throw std::runtime_error(path + ": duplicate id '" + fields[0] + "'");
    split.entries.push_back({fields[0], fields[1], parse_partition(fields[2])});
  }
  if (split.entries.empty()) throw std::runtime_error(path + ": split has no rows");
  return split;
}

// --- pair sampling ---------------------------------------------------------

const char* scope_name(Scope s) {
  switch (s) {
    case Scope::kSeen: return "seen";
    case Scope::kUnseen: return "unseen";
    case Scope::kAll: return "all";
  }
  return "?";
}

Scope parse_scope(const std::string& s) {
  if (s == "seen") return Scope::kSeen;
  if (s == "unseen") return Scope::kUnseen;
  if (s == "all") return Scope::kAll;
  throw std::runtime_error("unknown scope '" + s + "' (expected seen|unseen|all)");
}

std::vector<PairSample> sample_pairs(const Dataset& ds, const SplitManifest& split,
                                     Partition part, Scope scope, size_t n_pairs,
                                     double pos_ratio, uint64_t seed) {
  if (n_pairs == 0) throw std::runtime_error("pair sampling: n_pairs must be >= 1");
  if (!(pos_ratio >= 0.0) || pos_ratio > 1.0)
    throw std::runtime_error("pair sampling: pos_ratio must lie in [0,1]");

  const auto unseen_list = split.unseen_species();
  const std::unordered_set<std::string> unseen(unseen_list.begin(), unseen_list.end());

  // in-scope sample ids per species, ordered by species name then split order
  std::map<std::string, std::vector<size_t>> members;  // -> index into split.entries
  for (size_t i = 0; i < split.entries.size(); ++i) {
    const auto& e = split.entries[i];
    if (e.part != part) continue;
    const bool is_unseen = unseen.count(e.species) > 0;
    if (scope == Scope::kSeen && is_unseen) continue;
    if (scope == Scope::kUnseen && !is_unseen) continue;
    ds.index_of(e.id);  // every id must resolve against the dataset
    members[e.species].push_back(i);
  }
  if (members.size() < 2)
    throw std::runtime_error("pair sampling: " + std::string(partition_name(part)) + "/" +
                             scope_name(scope) + " holds " + std::to_string(members.size()) +
                             " species; need at least 2");

  std::vector<const std::vector<size_t>*> groups;
  uint64_t total = 0, pos_cap = 0;
  for (const auto& [name, idx] : members) {
    (void)name;
    groups.push_back(&idx);
    total += idx.size();
    pos_cap += static_cast<uint64_t>(idx.size()) * (idx.size() - 1) / 2;
  }
  uint64_t sq = 0;
  for (const auto* g : groups) sq += static_cast<uint64_t>(g->size()) * g->size();
  const uint64_t neg_cap = (total * total - sq) / 2;

  const size_t n_pos = static_cast<size_t>(std::llround(pos_ratio * static_cast<double>(n_pairs)));
  const size_t n_neg = n_pairs - n_pos;
  if (n_pos > pos_cap)
    throw std::runtime_error("pair sampling: requested " + std::to_string(n_pos) +
                             " positive pairs but only " + std::to_string(pos_cap) +
                             " distinct ones exist");
  if (n_neg > neg_cap)
    throw std::runtime_error("pair sampling: requested " + std::to_string(n_neg) +
                             " negative pairs but only " + std::to_string(neg_cap) +
                             " distinct ones exist");

  Rng rng(derive_seed(seed, "pairs"));
  std::vector<std::pair<size_t, size_t>> chosen;  // entry-index pairs
  std::vector<int> labels;
  chosen.reserve(n_pairs);
  labels.reserve(n_pairs);

  // positives
  if (n_pos > 0) {
    std::vector<size_t> eligible;  // group indices with >= 2 samples
    for (size_t g = 0; g < groups.size(); ++g)
      if (groups[g]->size() >= 2) eligible.push_back(g);
    if (4 * static_cast<uint64_t>(n_pos) >= pos_cap || pos_cap <= 262144) {
      // dense request: enumerate, shuffle, take
      std::vector<std::pair<size_t, size_t>> all;
      all.reserve(pos_cap);
      for (size_t g : eligible) {
        const auto& idx = *groups[g];
        for (size_t a = 0; a < idx.size(); ++a)
          for (size_t b = a + 1; b < idx.size(); ++b) all.emplace_back(idx[a], idx[b]);
      }
      rng.shuffle(all);
      for (size_t i = 0; i < n_pos; ++i) {
        chosen.push_back(all[i]);
        labels.push_back(0);
      }
    } else {
      std::unordered_set<uint64_t> used;
      size_t attempts = 0;
      const size_t max_attempts = 200 * n_pos + 10000;
      while (used.size() < n_pos) {
        if (++attempts > max_attempts)
          throw std::runtime_error("pair sampling: stalled drawing distinct positive pairs");
        const auto& idx = *groups[eligible[rng.next_below(eligible.size())]];
        const size_t a = idx[rng.next_below(idx.size())];
        size_t b = idx[rng.next_below(idx.size())];
        if (a == b) continue;
        if (used.insert(pack_pair_key(a, b)).second) {
          chosen.emplace_back(a, b);
          labels.push_back(0);
        }
      }
    }
  }

  // negatives
  if (n_neg > 0) {
    if (4 * static_cast<uint64_t>(n_neg) >= neg_cap || neg_cap <= 262144) {
      std::vector<std::pair<size_t, size_t>> all;
      all.reserve(neg_cap);
      for (size_t g = 0; g < groups.size(); ++g)
        for (size_t h = g + 1; h < groups.size(); ++h)
          for (size_t a : *groups[g])
            for (size_t b : *groups[h]) all.emplace_back(a, b);
      rng.shuffle(all);
      for (size_t i = 0; i < n_neg; ++i) {
        chosen.push_back(all[i]);
        labels.push_back(1);
      }
    } else {
      std::unordered_set<uint64_t> used;
      size_t attempts = 0;
      const size_t max_attempts = 200 * n_neg + 10000;
      while (used.size() < n_neg) {
        if (++attempts > max_attempts)
          throw std::runtime_error("pair sampling: stalled drawing distinct negative pairs");
        const size_t g = rng.next_below(groups.size());
        size_t h = rng.next_below(groups.size());
        if (g == h) continue;
        const size_t a = (*groups[g])[rng.next_below(groups[g]->size())];
        const size_t b = (*groups[h])[rng.next_below(groups[h]->size())];
        if (used.insert(pack_pair_key(a, b)).second) {
          chosen.emplace_back(a, b);
          labels.push_back(1);
        }
      }
    }
  }

  // one shuffle over the combined list so labels interleave
  std::vector<size_t> order(chosen.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<PairSample> out;
  out.reserve(chosen.size());
  for (size_t i : order)
    out.push_back({split.entries[chosen[i].first].id, split.entries[chosen[i].second].id,
                   labels[i]});
  return out;
}

void save_pairs(const std::vector<PairSample>& pairs, const std::string& path) {
  std::string out = "id_a,id_b,label\n";
  for (const auto& p : pairs)
    out += p.id_a + "," + p.id_b + "," + std::to_string(p.label) + "\n";
  write_text(path, out);
}

std::vector<PairSample> load_pairs(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "id_a,id_b,label")
    throw std::runtime_error(path + ": pair list must start with header 'id_a,id_b,label'");
  std::vector<PairSample> pairs;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split_csv(lines[i]);
    if (fields.size() != 3)
      throw std::runtime_error(path + ": line " + std::to_string(i + 1) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected 3");
    if (fields[2] != "0" && fields[2] != "1")
      throw std::runtime_error(path + ": line " + std::to_string(i + 1) +
                               " has label '" + fields[2] + "', expected 0 or 1");
    pairs.push_back({fields[0], fields[1], fields[2] == "0" ? 0 : 1});
  }
  if (pairs.empty()) throw std::runtime_error(path + ": pair list has no rows");
  return pairs;
}

// --- augmentation -----------------------------------------------------------

Tensor apply_augment(const Tensor& hwc, bool hflip, bool vflip, int quarter_turns) {
  if (hwc.rank() != 3)
    throw std::runtime_error("augment: image must be rank-3 HWC, got " +
                             shape_str(hwc.shape()));
  const int k = ((quarter_turns % 4) + 4) % 4;
  const size_t h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  if (h != w && k % 2 == 1)
    throw std::runtime_error("augment: quarter turns require a square image, got " +
                             shape_str(hwc.shape()));
  Tensor cur = hwc;
  auto at = [c](const Tensor& t, size_t r, size_t col) {
    return t.data() + (r * t.dim(1) + col) * c;
  };
  if (hflip) {
    Tensor next({h, w, c});
    for (size_t r = 0; r < h; ++r)
      for (size_t col = 0; col < w; ++col)
        std::copy(at(cur, r, w - 1 - col), at(cur, r, w - 1 - col) + c,
                  next.data() + (r * w + col) * c);
    cur = std::move(next);
  }
  if (vflip) {
    Tensor next({h, w, c});
    for (size_t r = 0; r < h; ++r)
      std::copy(at(cur, h - 1 - r, 0), at(cur, h - 1 - r, 0) + w * c,
                next.data() + r * w * c);
    cur = std::move(next);
  }
  for (int t = 0; t < k; ++t) {
    // one 90-degree counter-clockwise turn: out[i][j] = in[j][W-1-i]
    const size_t ih = cur.dim(0), iw = cur.dim(1);
    Tensor next({iw, ih, c});
    for (size_t i = 0; i < iw; ++i)
      for (size_t j = 0; j < ih; ++j)
        std::copy(at(cur, j, iw - 1 - i), at(cur, j, iw - 1 - i) + c,
                  next.data() + (i * ih + j) * c);
    cur = std::move(next);
  }
  return cur;
}

Tensor augment(const Tensor& hwc, Rng& rng) {
  if (hwc.rank() != 3)
    throw std::runtime_error("augment: image must be rank-3 HWC, got " +
                             shape_str(hwc.shape()));
  const bool hflip = rng.bernoulli(0.5);
  const bool vflip = rng.bernoulli(0.5);
  const bool square = hwc.dim(0) == hwc.dim(1);
  const int k = square ? static_cast<int>(rng.next_below(4))
                       : 2 * static_cast<int>(rng.next_below(2));
  return apply_augment(hwc, hflip, vflip, k);
}

// --- embedding vectors --------------------------------------------------------

void EmbeddingStore::add(const std::string& id, std::vector<float> v) {
  if (id.empty()) throw std::runtime_error("embeddings: empty id");
  if (dim == 0) dim = static_cast<uint32_t>(v.size());
  if (v.size() != dim || v.empty())
    throw std::runtime_error("embeddings: record '" + id + "' has dimension " +
                             std::to_string(v.size()) + ", store dimension is " +
                             std::to_string(dim));
  if (!by_id.emplace(id, ids.size()).second)
    throw std::runtime_error("embeddings: duplicate id '" + id + "'");
  ids.push_back(id);
  vectors.push_back(std::move(v));
}

const std::vector<float>& EmbeddingStore::find(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end())
    throw std::runtime_error("embeddings: unknown id '" + id + "'");
  return vectors[it->second];
}

namespace {
constexpr char kEmbMagic[4] = {'E', 'M', 'B', 'V'};
constexpr uint32_t kEmbVersion = 1;
}  // namespace

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  ByteWriter w;
  w.bytes(kEmbMagic, 4);
  w.u32(kEmbVersion);
  w.u32(static_cast<uint32_t>(store.ids.size()));
  w.u32(store.dim);
  for (size_t i = 0; i < store.ids.size(); ++i) {
    const std::string& id = store.ids[i];
    if (id.size() > 0xffff)
      throw std::runtime_error("embeddings: id too long: '" + id + "'");
    w.u16(static_cast<uint16_t>(id.size()));
    w.str(id);
    w.f32_array(store.vectors[i].data(), store.vectors[i].size());
  }
  w.save(path);
}

EmbeddingStore load_embeddings(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  if (r.str(4) != std::string(kEmbMagic, 4))
    throw std::runtime_error(path + ": not an embedding file (bad magic)");
  const uint32_t version = r.u32();
  if (version != kEmbVersion)
    throw std::runtime_error(path + ": unsupported embedding file version " +
                             std::to_string(version));
  const uint32_t count = r.u32();
  const uint32_t dim = r.u32();
  // A zero-record file is a valid empty store; a zero dimension is not.
  if (dim == 0)
    throw std::runtime_error(path + ": embedding file declares zero dimension");
  EmbeddingStore store;
  store.dim = dim;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t id_len = r.u16();
    if (id_len == 0) throw std::runtime_error(path + ": record with empty id");
    const std::string id = r.str(id_len);
    std::vector<float> v(dim);
    r.f32_array(v.data(), dim);
    store.add(id, std::move(v));
  }
  r.expect_end();
  return store;
}

void check_embeddings_join(const EmbeddingStore& store, const Dataset& ds) {
  for (const auto& id : store.ids) ds.index_of(id);
}

}  // namespace snn
