// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Image-to-text alignment loss and the combined training objective.
//
//   L_dist(i) = -log( exp(t_i . P_i / tau) / sum_j exp(t_j . P_i / tau) ),  P_i = W f_i
//   L         = L_ce + lambda * L_dist
//
// Negatives are the other text rows of the same mini-batch; the denominator
// includes the positive pair. Both terms are batch means.

#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "crossalign/error.hpp"
#include "crossalign/tensor.hpp"

namespace crossalign {

struct AlignmentConfig {
    double lambda = 0.3;
    double tau = 0.5;
    bool normalize_projection = true;

    void validate() const {
        if (!(tau > 0.0)) fail(ErrorKind::config, "tau must be > 0, got " + std::to_string(tau));
        if (!(lambda >= 0.0)) fail(ErrorKind::config, "lambda must be >= 0, got " + std::to_string(lambda));
    }

    bool operator==(const AlignmentConfig&) const = default;
};

/// Batch-mean InfoNCE loss between projected image features and their text embeddings.
///
/// text rows [B x k] are treated as constants (no gradient ever reaches them);
/// gradients flow to `features` [B x d] and `projection` [k x d].
inline Tensor distance_loss(const Tensor& text, const Tensor& features, const Tensor& projection, double tau,
                            bool normalize_projection) {
    if (!(tau > 0.0)) fail(ErrorKind::config, "distance_loss: tau must be > 0, got " + std::to_string(tau));
    if (features.rank() != 2 || features.dim(0) == 0) fail(ErrorKind::usage, "distance_loss: empty batch");
    if (text.rank() != 2 || projection.rank() != 2 || text.dim(0) != features.dim(0) ||
        projection.dim(1) != features.dim(1) || projection.dim(0) != text.dim(1)) {
        fail(ErrorKind::dimension, "distance_loss: inconsistent shapes text " + shape_str(text.shape()) +
                                       ", features " + shape_str(features.shape()) + ", W " +
                                       shape_str(projection.shape()));
    }
    const std::size_t batch = features.dim(0);
    Tensor projected = matmul(features, transpose(projection));
    if (normalize_projection) projected = l2_normalize_rows(projected);
    Tensor logits = scale(matmul(projected, transpose(text.detach())), 1.0 / tau);
    std::vector<std::size_t> diagonal(batch);
    std::iota(diagonal.begin(), diagonal.end(), std::size_t{0});
    return softmax_cross_entropy(logits, diagonal);
}

inline Tensor total_objective(const Tensor& ce_loss, const Tensor& dist_loss, double lambda) {
    if (ce_loss.size() != 1 || dist_loss.size() != 1) {
        fail(ErrorKind::dimension, "total_objective: both losses must be scalars");
    }
    return add(ce_loss, scale(dist_loss, lambda));
}

}  // namespace crossalign
