#pragma once

// Normalized-cut objectives on a sparse affinity matrix.
//
//   hard_ncut      sum_k cut(A_k, V-A_k) / assoc(A_k, V) for a discrete
//                  partition; empty classes contribute 0.
//   soft_ncut      K - sum_k (p_k' W p_k) / (p_k' d), the differentiable
//                  relaxation over per-pixel class probabilities.
//   soft_ncut_grad exact partial derivatives of soft_ncut w.r.t. the
//                  probability field (before softmax composition).
//
// All sums run in storage order so results are deterministic and consistent
// with the cached degree vector.

#include "wnet/affinity.hpp"
#include "wnet/tensor.hpp"

namespace wnet {

double hard_ncut(const LabelMap& labels, const SparseAffinity& w, int k);

double soft_ncut(const SoftSegmentation& p, const SparseAffinity& w);

// dJ/dp_k = -[2 (W p_k)(p_k' d) - (p_k' W p_k) d] / (p_k' d)^2, elementwise.
// K = 1 is a constant loss on the simplex; the gradient is defined as zero.
SoftSegmentation soft_ncut_grad(const SoftSegmentation& p, const SparseAffinity& w);

// Loss and gradient from one pass (the training hot path).
double soft_ncut_with_grad(const SoftSegmentation& p, const SparseAffinity& w,
                           SoftSegmentation& grad);

}  // namespace wnet
