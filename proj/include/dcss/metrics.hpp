#pragma once

// Clustering accuracy under the best one-to-one label mapping, and NMI.

#include <vector>

#include "dcss/tensor_nn.hpp"

namespace dcss {

using LabelVector = std::vector<int>;

/// Square count matrix, rows = true labels, cols = predicted labels. Labels
/// are compacted to 0..n-1 in ascending order of value and the smaller side
/// is zero-padded.
nn::MatrixXd confusion_matrix(const LabelVector& truth, const LabelVector& pred);

/// Permutation maximizing Σ_r weights(r, perm[r]) (Kuhn–Munkres, O(K³)).
std::vector<int> hungarian(const nn::MatrixXd& weights);

double accuracy(const LabelVector& truth, const LabelVector& pred);

/// I(l; c) / max(H(l), H(c)); 0 when the mutual information is 0.
double nmi(const LabelVector& truth, const LabelVector& pred);

}  // namespace dcss
