// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact O(N^2) t-SNE.
//
// Conditional affinities are calibrated per point by bisection on the Gaussian
// precision until the row perplexity matches the target, symmetrized as
// P = (P_cond + P_cond^T) / (2N), and matched by a Student-t embedding through
// gradient descent on KL(P || Q) with momentum, per-coordinate gains and early
// exaggeration.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "crossalign/error.hpp"
#include "crossalign/rng.hpp"

namespace crossalign {

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    std::uint64_t seed = 0;

    void validate(std::size_t n_points) const {
        if (n_points < 10) fail(ErrorKind::config, "t-SNE needs at least 10 points, got " + std::to_string(n_points));
        if (!(perplexity >= 2.0)) fail(ErrorKind::config, "perplexity must be >= 2");
        if (!(perplexity < static_cast<double>(n_points))) {
            fail(ErrorKind::config, "perplexity " + std::to_string(perplexity) + " must be below the point count " +
                                        std::to_string(n_points));
        }
        if (iterations == 0) fail(ErrorKind::config, "iterations must be >= 1");
        if (!(learning_rate > 0.0)) fail(ErrorKind::config, "learning_rate must be > 0");
        if (!(early_exaggeration >= 1.0)) fail(ErrorKind::config, "early_exaggeration must be >= 1");
    }
};

struct PerplexityRow {
    std::vector<double> probs;  // sums to 1
    double beta = 1.0;          // precision, 1 / (2 sigma^2)
    double sigma = 0.0;
    double achieved_log2_perplexity = 0.0;
    std::size_t iterations = 0;
};

inline constexpr double kPerplexityTolerance = 1e-5;
inline constexpr std::size_t kPerplexityMaxIterations = 50;

/// Gaussian conditional probabilities over one point's neighbors (self excluded)
/// whose perplexity matches `target`.
inline PerplexityRow perplexity_search(std::span<const double> sq_distances, double target) {
    if (sq_distances.empty()) fail(ErrorKind::usage, "perplexity_search: empty distance row");
    if (!(target > 0.0) || target >= static_cast<double>(sq_distances.size()) + 1.0) {
        fail(ErrorKind::config, "perplexity_search: target " + std::to_string(target) + " needs fewer than " +
                                    std::to_string(sq_distances.size() + 1) + " neighbors");
    }
    const double dmin = *std::min_element(sq_distances.begin(), sq_distances.end());
    const double dmax = *std::max_element(sq_distances.begin(), sq_distances.end());
    if (dmax <= 0.0) fail(ErrorKind::degenerate, "perplexity_search: all distances are zero");

    const double log2_target = std::log2(target);
    const std::size_t n = sq_distances.size();
    PerplexityRow row;
    row.probs.assign(n, 0.0);
    double beta = 1.0 / dmax;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();

    auto evaluate = [&](double b) {
        double s = 0.0, weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double shifted = sq_distances[j] - dmin;
            const double p = shifted == 0.0 ? 1.0 : std::exp(-shifted * b);
            row.probs[j] = p;
            s += p;
            weighted += shifted * p;
        }
        for (double& p : row.probs) p /= s;
        return (std::log(s) + b * weighted / s) / std::numbers::ln2;  // entropy in bits
    };

    double entropy = evaluate(beta);
    std::size_t it = 0;
    while (std::abs(entropy - log2_target) >= kPerplexityTolerance && it < kPerplexityMaxIterations) {
        if (entropy > log2_target) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        entropy = evaluate(beta);
        ++it;
    }
    row.beta = beta;
    row.sigma = std::sqrt(1.0 / (2.0 * beta));
    row.achieved_log2_perplexity = entropy;
    row.iterations = it;
    return row;
}

/// Row-major N x N squared Euclidean distances of the rows of X (N x dim).
inline std::vector<double> squared_distances(std::span<const double> X, std::size_t n, std::size_t dim) {
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = X[i * dim + c] - X[j * dim + c];
                s += diff * diff;
            }
            d[i * n + j] = d[j * n + i] = s;
        }
    return d;
}

/// Symmetrized joint affinities (N x N, zero diagonal, sums to 1).
inline std::vector<double> joint_probabilities(std::span<const double> X, std::size_t n, std::size_t dim,
                                               double perplexity) {
    const auto d = squared_distances(X, n, dim);
    std::vector<double> cond(n * n, 0.0);
    std::vector<double> row(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0, c = 0; j < n; ++j)
            if (j != i) row[c++] = d[i * n + j];
        const auto pr = perplexity_search(row, perplexity);
        for (std::size_t j = 0, c = 0; j < n; ++j)
            if (j != i) cond[i * n + j] = pr.probs[c++];
    }
    std::vector<double> P(n * n, 0.0);
    const double denom = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) P[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
    return P;
}

/// KL(P || Q) for a 2-D embedding Y under Student-t affinities.
inline double tsne_kl(std::span<const double> P, std::span<const double> Y, std::size_t n) {
    double z = 0.0;
    std::vector<double> num(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = Y[2 * i] - Y[2 * j], dy = Y[2 * i + 1] - Y[2 * j + 1];
            num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
            z += num[i * n + j];
        }
    double kl = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        if (P[i] > 0.0) kl += P[i] * std::log(P[i] / (num[i] / z));
    }
    return kl;
}

struct TsneResult {
    std::vector<double> Y;  // N x 2
    std::vector<double> P;  // N x N joint affinities
    double initial_kl = 0.0;
    double final_kl = 0.0;
};

inline TsneResult tsne(std::span<const double> X, std::size_t n, std::size_t dim, const TsneConfig& config) {
    config.validate(n);
    if (dim == 0 || X.size() != n * dim) fail(ErrorKind::dimension, "tsne: X does not have n x dim entries");

    TsneResult result;
    result.P = joint_probabilities(X, n, dim, config.perplexity);
    const auto& P = result.P;

    Rng rng(config.seed);
    std::vector<double>& Y = result.Y;
    Y.resize(n * 2);
    for (double& y : Y) y = 1e-4 * rng.normal();
    result.initial_kl = tsne_kl(P, Y, n);

    std::vector<double> update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2), num(n * n);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const double exaggeration = it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
        const double momentum = it < config.momentum_switch ? config.initial_momentum : config.final_momentum;

        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = Y[2 * i] - Y[2 * j], dy = Y[2 * i + 1] - Y[2 * j + 1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = num[i * n + j];
                const double coeff = (exaggeration * P[i * n + j] - q / z) * q;
                gx += coeff * (Y[2 * i] - Y[2 * j]);
                gy += coeff * (Y[2 * i + 1] - Y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        }
        for (std::size_t c = 0; c < n * 2; ++c) {
            const bool same_sign = (grad[c] > 0.0) == (update[c] > 0.0);
            gains[c] = same_sign ? std::max(gains[c] * 0.8, 0.01) : gains[c] + 0.2;
            update[c] = momentum * update[c] - config.learning_rate * gains[c] * grad[c];
            Y[c] += update[c];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += Y[2 * i];
            my += Y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            Y[2 * i] -= mx;
            Y[2 * i + 1] -= my;
        }
    }
    result.final_kl = tsne_kl(P, Y, n);
    return result;
}

}  // namespace crossalign
