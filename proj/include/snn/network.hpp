#pragma once

// The embedding network and its persistent form.
//
// Builtin backbone (images [N,S,S,C]):
//   3 x { conv2d 3x3 same -> +bias -> relu -> maxpool2d 2 } with 16/32/64
//   filters, then flatten -> dropout -> dense to 128 -> optional row-wise
//   L2 normalization.
// Precomputed backbone (feature vectors [N,F]): dropout -> dense to 128 ->
//   optional normalization; used when embeddings come from an external
//   feature extractor.
//
// Both branches of a pair go through the same parameter tensors, so weight
// sharing is structural rather than copied.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "snn/rng.hpp"
#include "snn/tensor.hpp"

namespace snn {

inline constexpr size_t kEmbeddingDim = 128;
inline constexpr size_t kConvFilters[3] = {16, 32, 64};

enum class Backbone { kBuiltin, kPrecomputed };

inline const char* backbone_name(Backbone b) {
  return b == Backbone::kBuiltin ? "builtin" : "precomputed";
}

template <typename T>
struct ParamTensorT {
  std::string name;
  std::shared_ptr<TensorT<T>> value;
};

// Spatial side length after the conv/pool stack (each pool halves, odd
// dimensions round up).
inline size_t pooled_side(size_t side) {
  for (int i = 0; i < 3; ++i) side = (side + 1) / 2;
  return side;
}

template <typename T>
struct ModelParamsT {
  Backbone backbone = Backbone::kBuiltin;
  size_t input_size = 64;   // square input side (builtin)
  size_t channels = 3;      // input channels (builtin)
  size_t feature_dim = 0;   // input feature width (precomputed)
  bool normalize = true;    // L2-normalize embeddings
  double dropout = 0.2;     // drop probability before the dense head
  std::vector<ParamTensorT<T>> tensors;  // serialized in this order

  std::shared_ptr<TensorT<T>> find(const std::string& name) const {
    for (const auto& p : tensors)
      if (p.name == name) return p.value;
    throw std::runtime_error("model: missing tensor '" + name + "'");
  }

  size_t flat_dim() const {
    if (backbone == Backbone::kPrecomputed) return feature_dim;
    const size_t s = pooled_side(input_size);
    return s * s * kConvFilters[2];
  }
};

using ModelParams = ModelParamsT<float>;

namespace detail {

// He-style uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename T>
void init_uniform(TensorT<T>& t, size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

// Freshly initialized parameters. Weights are seeded from rng, biases zero.
template <typename T>
ModelParamsT<T> init_model(Backbone backbone, size_t input_size, size_t channels,
                           size_t feature_dim, bool normalize, double dropout,
                           Rng& rng) {
  if (!(dropout >= 0.0) || dropout >= 1.0)
    throw std::runtime_error("model: dropout must be in [0,1), got " + std::to_string(dropout));
  ModelParamsT<T> p;
  p.backbone = backbone;
  p.normalize = normalize;
  p.dropout = dropout;
  auto push = [&p](std::string name, TensorT<T> t) {
    p.tensors.push_back({std::move(name), std::make_shared<TensorT<T>>(std::move(t))});
  };
  if (backbone == Backbone::kBuiltin) {
    if (input_size < 8)
      throw std::runtime_error("model: input size must be >= 8, got " + std::to_string(input_size));
    if (channels == 0) throw std::runtime_error("model: channels must be >= 1");
    p.input_size = input_size;
    p.channels = channels;
    p.feature_dim = 0;
    size_t cin = channels;
    for (int l = 0; l < 3; ++l) {
      const size_t cout = kConvFilters[l];
      TensorT<T> w({3, 3, cin, cout});
      detail::init_uniform(w, 9 * cin, rng);
      const std::string base = "conv" + std::to_string(l + 1);
      push(base + ".weight", std::move(w));
      push(base + ".bias", TensorT<T>({cout}));
      cin = cout;
    }
  } else {
    if (feature_dim == 0)
      throw std::runtime_error("model: precomputed backbone needs feature_dim >= 1");
    p.feature_dim = feature_dim;
    p.input_size = 0;
    p.channels = 0;
  }
  const size_t flat = p.flat_dim();
  TensorT<T> hw({flat, kEmbeddingDim});
  detail::init_uniform(hw, flat, rng);
  push("head.weight", std::move(hw));
  push("head.bias", TensorT<T>({kEmbeddingDim}));
  return p;
}

// Check that the tensor set matches the configured geometry. Called after
// checkpoint load and before save so a malformed model can never circulate.
template <typename T>
void validate_model(const ModelParamsT<T>& p) {
  auto expect = [&p](const std::string& name, const std::vector<size_t>& shape) {
    auto t = p.find(name);
    if (t->shape() != shape)
      throw std::runtime_error("model: tensor '" + name + "' has shape " +
                               shape_str(t->shape()) + ", expected " + shape_str(shape));
  };
  size_t n_expected = 2;
  if (p.backbone == Backbone::kBuiltin) {
    if (p.input_size < 8 || p.channels == 0)
      throw std::runtime_error("model: invalid input geometry");
    size_t cin = p.channels;
    for (int l = 0; l < 3; ++l) {
      const size_t cout = kConvFilters[l];
      const std::string base = "conv" + std::to_string(l + 1);
      expect(base + ".weight", {3, 3, cin, cout});
      expect(base + ".bias", {cout});
      cin = cout;
    }
    n_expected += 6;
  } else if (p.feature_dim == 0) {
    throw std::runtime_error("model: precomputed backbone needs feature_dim >= 1");
  }
  expect("head.weight", {p.flat_dim(), kEmbeddingDim});
  expect("head.bias", {kEmbeddingDim});
  if (p.tensors.size() != n_expected)
    throw std::runtime_error("model: expected " + std::to_string(n_expected) +
                             " tensors, found " + std::to_string(p.tensors.size()));
  if (!(p.dropout >= 0.0) || p.dropout >= 1.0)
    throw std::runtime_error("model: dropout out of range");
}

// Build the embedding computation on a tape. input is [N,S,S,C] (builtin) or
// [N,F] (precomputed); the result is [N,128]. In train mode parameters are
// registered as trainable leaves and dropout is active (rng drives the mask);
// in inference mode the tape may be non-recording and rng is untouched.
template <typename T>
typename TapeT<T>::NodePtr embed_on_tape(TapeT<T>& tape, const ModelParamsT<T>& p,
                                         typename TapeT<T>::NodePtr input, Mode mode,
                                         Rng& rng) {
  const bool train = mode == Mode::kTrain;
  auto param = [&](const std::string& name) {
    return tape.leaf(p.find(name), /*trainable=*/train);
  };
  typename TapeT<T>::NodePtr x = input;
  if (p.backbone == Backbone::kBuiltin) {
    if (x->rank() != 4 || x->dim(1) != p.input_size || x->dim(2) != p.input_size ||
        x->dim(3) != p.channels)
      throw std::runtime_error("embed: input " + shape_str(x->shape()) +
                               " does not match model geometry [N," +
                               std::to_string(p.input_size) + "," +
                               std::to_string(p.input_size) + "," +
                               std::to_string(p.channels) + "]");
    for (int l = 1; l <= 3; ++l) {
      const std::string base = "conv" + std::to_string(l);
      x = tape.conv2d(x, param(base + ".weight"));
      x = tape.bias_channels(x, param(base + ".bias"));
      x = tape.relu(x);
      x = tape.maxpool2d(x);
    }
    x = tape.reshape(x, {x->dim(0), p.flat_dim()});
  } else {
    if (x->rank() != 2 || x->dim(1) != p.feature_dim)
      throw std::runtime_error("embed: input " + shape_str(x->shape()) +
                               " does not match feature width " +
                               std::to_string(p.feature_dim));
  }
  x = tape.dropout(x, 1.0 - p.dropout, mode, rng);
  x = tape.dense(x, param("head.weight"), param("head.bias"));
  if (p.normalize) x = tape.l2_normalize_rows(x);
  return x;
}

// Inference-only embedding: no tape bookkeeping, no dropout.
template <typename T>
TensorT<T> embed_infer(const ModelParamsT<T>& p, TensorT<T> input) {
  TapeT<T> tape(/*recording=*/false);
  Rng unused(0);
  auto in = tape.leaf(std::move(input));
  return *embed_on_tape(tape, p, in, Mode::kInfer, unused);
}

// Euclidean distance between two embeddings.
template <typename T>
T energy(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size())
    throw std::runtime_error("energy: dimension mismatch " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return static_cast<T>(std::sqrt(acc));
}

// Map a raw distance to the score the decision rule thresholds. With
// normalized embeddings distances live in [0,2], so half the distance is a
// [0,1] score (clamped against fp drift); without normalization the raw
// distance is the score.
inline double similarity_score(double d, bool normalized) {
  if (d < 0) throw std::runtime_error("similarity_score: negative distance");
  if (!normalized) return d;
  const double s = d / 2.0;
  return s > 1.0 ? 1.0 : s;
}

// Checkpoint container format (little-endian):
//   magic "SNNC" | u32 version=1 | u32 tensor_count
//   u32 meta_len | meta_len bytes of "key=value\n" UTF-8 metadata
//   tensor_count records: u16 name_len | name | u8 rank | rank x u32 dims |
//                         prod(dims) x f32 values
// Loaders reject bad magic/version, malformed metadata, truncation, and
// trailing bytes.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Deep copies for snapshotting / the 64-bit verification path.
ModelParams clone_model(const ModelParams& p);
ModelParamsT<double> widen_model(const ModelParams& p);

}  // namespace snn
