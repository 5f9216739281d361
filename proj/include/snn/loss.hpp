#pragma once

// Contrastive pair loss over embedding distances.
//
// For a pair with Euclidean embedding distance d and label y (0 = similar,
// 1 = dissimilar) and margin m:
//
//     L(d, y) = (1 - y) * d^2 / 2  +  y * max(0, m - d)^2 / 2
//
// Similar pairs are pulled together quadratically; dissimilar pairs are
// pushed apart until their distance clears the margin, beyond which they
// contribute nothing.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

template <typename T>
T contrastive_loss(T d, int y, T margin) {
  if (y != 0 && y != 1)
    throw std::runtime_error("contrastive_loss: label must be 0 or 1, got " +
                             std::to_string(y));
  if (d < T{0})
    throw std::runtime_error("contrastive_loss: distance must be >= 0, got " +
                             std::to_string(static_cast<double>(d)));
  if (!(margin > T{0}))
    throw std::runtime_error("contrastive_loss: margin must be > 0, got " +
                             std::to_string(static_cast<double>(margin)));
  if (y == 0) return d * d / T{2};
  const T hinge = margin - d > T{0} ? margin - d : T{0};
  return hinge * hinge / T{2};
}

// dL/dd. At the hinge corner (d == margin) and at d == 0 for dissimilar
// pairs the subgradient 0 / -margin convention below matches the one-sided
// limits used in training.
template <typename T>
T contrastive_loss_ddist(T d, int y, T margin) {
  if (y == 0) return d;
  return margin - d > T{0} ? -(margin - d) : T{0};
}

// Tape op: mean contrastive loss over B pairs embedded as one [2B, D] block,
// pair i being rows (i, i + B). Returns a scalar node.
//
// Backward: with diff = e_a - e_b, dL/d(e_a) = (1/B) * (dL/dd) * diff / d
// and the negation for e_b; pairs at d ~ 0 get a zero subgradient (for
// similar pairs that is also the exact gradient).
template <typename T>
typename TapeT<T>::NodePtr contrastive_pair_loss(TapeT<T>& tape,
                                                 const typename TapeT<T>::NodePtr& emb,
                                                 const std::vector<int>& labels,
                                                 T margin) {
  if (emb->rank() != 2)
    throw std::runtime_error("contrastive_pair_loss: embeddings must be rank-2, got " +
                             shape_str(emb->shape()));
  const size_t b = labels.size();
  const size_t d = emb->dim(1);
  if (b == 0 || emb->dim(0) != 2 * b)
    throw std::runtime_error("contrastive_pair_loss: embeddings " + shape_str(emb->shape()) +
                             " do not hold 2x" + std::to_string(b) + " pair rows");
  if (!(margin > T{0}))
    throw std::runtime_error("contrastive_pair_loss: margin must be > 0");

  auto diffs = std::make_shared<std::vector<T>>(b * d);
  auto dists = std::make_shared<std::vector<T>>(b);
  const T* e = emb->data();
  double total = 0;
  for (size_t i = 0; i < b; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::runtime_error("contrastive_pair_loss: label must be 0 or 1, got " +
                               std::to_string(labels[i]) + " at pair " + std::to_string(i));
    double acc = 0;
    for (size_t j = 0; j < d; ++j) {
      const T df = e[i * d + j] - e[(i + b) * d + j];
      (*diffs)[i * d + j] = df;
      acc += static_cast<double>(df) * df;
    }
    const T dist = static_cast<T>(std::sqrt(acc));
    (*dists)[i] = dist;
    total += contrastive_loss(dist, labels[i], margin);
  }

  TensorT<T> out({1});
  out[0] = static_cast<T>(total / static_cast<double>(b));
  auto y = tape.adopt(std::move(out), {emb.get()});
  if (tape.recording() && tape.needs_grad(emb)) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    tape.record("contrastive_pair_loss", [emb, y, diffs, dists, lab, margin, b, d] {
      if (!y->has_grad()) return;
      const T dy = y->grad()[0];
      emb->ensure_grad();
      T* de = emb->grad().data();
      const T inv_b = T{1} / static_cast<T>(b);
      for (size_t i = 0; i < b; ++i) {
        const T dist = (*dists)[i];
        if (dist <= T{1e-12}) continue;
        const T g = dy * inv_b * contrastive_loss_ddist(dist, (*lab)[i], margin) / dist;
        for (size_t j = 0; j < d; ++j) {
          const T gj = g * (*diffs)[i * d + j];
          de[i * d + j] += gj;
          de[(i + b) * d + j] -= gj;
        }
      }
    });
  }
  return y;
}

}  // namespace snn
