#pragma once

// Dataset manifests, zero-shot splits, pair sampling, augmentation, and the
// embedding-vector file format.
//
// On-disk formats (all CSV, comma-separated, no quoting; ids and species
// names therefore must not contain commas):
//   manifest:  header "id,species,path", one row per sample, paths relative
//              to the manifest's directory unless absolute
//   split:     header "id,species,partition" with partition in
//              {train,validation,test}; trailing "# key=value" comment lines
//              record the split parameters
//   pairs:     header "id_a,id_b,label" with label 0 (similar) / 1 (dissimilar)
//   embeddings: binary "EMBV" | u32 version=1 | u32 count | u32 dim, then per
//              record u16 id_len | id | dim x f32 (little-endian)

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "snn/rng.hpp"
#include "snn/tensor.hpp"

namespace snn {

// --- image io (backed by the imgcodecs library) --------------------------

// Decode PNG/JPEG into [H,W,3] float RGB in [0,1]. Throws on missing or
// undecodable files.
Tensor decode_image_file(const std::string& path);

// Encode [H,W,3] float RGB in [0,1] (values clamped) as PNG.
void encode_png(const std::string& path, const Tensor& hwc);

// --- dataset --------------------------------------------------------------

struct SampleRow {
  std::string id;
  std::string species;
  std::string path;  // as written in the manifest
};

struct SpeciesInfo {
  std::string name;
  uint64_t count = 0;
  bool unseen = false;
};

// Species census in lexicographic name order.
struct SpeciesCatalog {
  std::vector<SpeciesInfo> species;

  size_t unseen_count() const {
    size_t n = 0;
    for (const auto& s : species) n += s.unseen ? 1 : 0;
    return n;
  }
  size_t seen_count() const { return species.size() - unseen_count(); }
};

class Dataset {
 public:
  // Parse a manifest. Validates the header, uniqueness of ids, and field
  // well-formedness; does not touch image files (decoding is lazy).
  static Dataset load_manifest(const std::string& manifest_path);

  size_t size() const { return rows_.size(); }
  const SampleRow& row(size_t i) const { return rows_[i]; }
  const std::vector<SampleRow>& rows() const { return rows_; }
  const std::string& dir() const { return dir_; }

  size_t index_of(const std::string& id) const;  // throws on unknown id
  std::string resolved_path(size_t i) const;

  // Decoded pixels for row i, cached after first use. All images in a
  // dataset must share one resolution; a mismatch throws.
  const Tensor& pixels(size_t i) const;

  // Census of species with the unseen flag set by the count rule
  // (count < min_count) plus any species whose name starts with
  // unseen_prefix (used when the dataset was generated with designated
  // holdout species; empty prefix disables it).
  SpeciesCatalog catalog(uint64_t min_count, const std::string& unseen_prefix = "") const;

 private:
  std::string dir_;
  std::vector<SampleRow> rows_;
  std::unordered_map<std::string, size_t> by_id_;
  mutable std::vector<std::optional<Tensor>> cache_;
  mutable std::optional<std::pair<size_t, size_t>> resolution_;
};

// --- zero-shot split --------------------------------------------------------

enum class Partition { kTrain, kValidation, kTest };

const char* partition_name(Partition p);
Partition parse_partition(const std::string& s);

struct SplitParams {
  uint64_t min_count = 1000;   // species below this are unseen
  double test_frac = 0.2;      // per seen species, floor(test_frac * count) to test
  double val_frac = 0.2;       // of the remaining seen pool, per species
  std::string unseen_prefix;   // optional designated-holdout name prefix
  uint64_t seed = 0;
};

struct SplitManifest {
  struct Entry {
    std::string id;
    std::string species;
    Partition part;
  };
  std::vector<Entry> entries;  // in dataset row order
  SplitParams params;

  size_t count(Partition p) const;
  // Species with no train/validation presence, i.e. the unseen set.
  std::vector<std::string> unseen_species() const;
  bool is_unseen(const std::string& species) const;
};

// Partition a dataset for zero-shot evaluation:
//   - species with count < min_count (or matching unseen_prefix) become
//     unseen: every sample goes to test;
//   - each seen species sends floor(test_frac * count) samples to test, and
//     the remainder is split per species floor(val_frac * rest) / rest into
//     validation / train.
// Sample order within a species is shuffled by a seed derived per species,
// so the split is deterministic and independent of manifest row order
// permutations within a species. Throws if the catalog is empty, every
// species is unseen, or train/validation end up empty.
SplitManifest make_split(const Dataset& ds, const SplitParams& params);

void save_split(const SplitManifest& split, const std::string& path);
SplitManifest load_split(const std::string& path);

// --- pair sampling ----------------------------------------------------------

enum class Scope { kSeen, kUnseen, kAll };

const char* scope_name(Scope s);
Scope parse_scope(const std::string& s);

struct PairSample {
  std::string id_a;
  std::string id_b;
  int label = 0;  // 0 similar (same species), 1 dissimilar
};

// Draw n_pairs distinct unordered pairs from one partition of the split,
// restricted to seen/unseen/all species. Exactly round(pos_ratio * n_pairs)
// pairs are positive (same species); the rest pair two distinct species.
// Throws when the scope holds fewer than two species or cannot supply the
// requested number of distinct pairs. The returned order is shuffled.
std::vector<PairSample> sample_pairs(const Dataset& ds, const SplitManifest& split,
                                     Partition part, Scope scope, size_t n_pairs,
                                     double pos_ratio, uint64_t seed);

void save_pairs(const std::vector<PairSample>& pairs, const std::string& path);
std::vector<PairSample> load_pairs(const std::string& path);

// --- augmentation -----------------------------------------------------------

// Deterministic core: optional horizontal / vertical flip then k quarter
// turns counter-clockwise. Non-square images only admit k in {0,2}.
Tensor apply_augment(const Tensor& hwc, bool hflip, bool vflip, int quarter_turns);

// Random policy: hflip ~ B(1/2), vflip ~ B(1/2), k uniform in {0..3}
// (restricted to {0,2} for non-square input).
Tensor augment(const Tensor& hwc, Rng& rng);

// --- embedding vectors --------------------------------------------------------

struct EmbeddingStore {
  uint32_t dim = 0;
  std::vector<std::string> ids;             // record order
  std::vector<std::vector<float>> vectors;  // parallel to ids
  std::unordered_map<std::string, size_t> by_id;

  void add(const std::string& id, std::vector<float> v);
  const std::vector<float>& find(const std::string& id) const;  // throws on unknown id
};

void save_embeddings(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_embeddings(const std::string& path);

// Verify every id in the store resolves against the dataset (join check used
// when attaching precomputed features).
void check_embeddings_join(const EmbeddingStore& store, const Dataset& ds);

}  // namespace snn
