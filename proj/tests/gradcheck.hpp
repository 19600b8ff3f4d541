// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of the full training objective ce + lambda * dist
// with respect to every parameter of the backbone, head and projection.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crossalign/losses.hpp"
#include "crossalign/models.hpp"
#include "crossalign/tensor.hpp"
#include "support.hpp"

namespace testing_support {

struct ObjectiveCase {
    crossalign::ModelConfig model;
    std::size_t batch = 3;
    crossalign::AlignmentConfig alignment;
    std::uint64_t data_seed = 0;
    std::string describe() const {
        return std::string(crossalign::to_string(model.arch)) + " C" + std::to_string(model.channels) + " " +
               std::to_string(model.height) + "x" + std::to_string(model.width) + " d" +
               std::to_string(model.feature_dim) + " k" + std::to_string(model.embed_dim) + " classes" +
               std::to_string(model.num_classes) + " B" + std::to_string(batch) + " lambda " +
               std::to_string(alignment.lambda) + " tau " + std::to_string(alignment.tau) +
               (alignment.normalize_projection ? " normalized" : " raw");
    }
};

/// Random small configuration; varies every structural knob.
inline ObjectiveCase random_objective_case(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
    };
    ObjectiveCase c;
    c.model.arch = seed % 2 == 0 ? crossalign::Arch::mlp : crossalign::Arch::tiny_cnn;
    c.model.channels = pick(1, 2);
    c.model.height = pick(4, 6);
    c.model.width = pick(4, 6);
    c.model.feature_dim = pick(3, 8);
    c.model.embed_dim = pick(2, 6);
    c.model.num_classes = pick(2, 5);
    c.model.init_seed = seed * 7919 + 1;
    c.batch = pick(1, 5);
    const double lambdas[] = {0.0, 0.1, 0.3, 0.5, 1.0};
    const double taus[] = {0.1, 0.5, 1.0, 1.5};
    c.alignment.lambda = lambdas[pick(0, 4)];
    c.alignment.tau = taus[pick(0, 3)];
    c.alignment.normalize_projection = pick(0, 3) != 0;
    c.data_seed = seed * 104729 + 3;
    return c;
}

struct ObjectiveCheck {
    double max_rel_error = 0.0;
    std::size_t parameters = 0;  // scalar parameters checked
    std::size_t attempts = 0;    // draws needed to stay clear of relu kinks and near-zero projections
    bool every_grad_finite = true;
};

inline constexpr double kMinReluMargin = 1e-4;
inline constexpr double kMinProjectionNorm = 0.02;

/// Smallest |W f_i| over the batch.
inline double min_projection_norm(const crossalign::ModelBundle& model, const crossalign::Tensor& x) {
    using namespace crossalign;
    NoGradGuard guard;
    const Tensor p = matmul(forward_features(model, x), transpose(model.param("projection.weight")));
    const std::size_t k = p.dim(1);
    double smallest = INFINITY;
    for (std::size_t i = 0; i < p.dim(0); ++i) {
        double n = 0.0;
        for (std::size_t j = 0; j < k; ++j) n += p[i * k + j] * p[i * k + j];
        smallest = std::min(smallest, std::sqrt(n));
    }
    return smallest;
}

/// Analytic vs central-difference gradients for every parameter scalar.
inline ObjectiveCheck check_objective_gradients(const ObjectiveCase& c) {
    using namespace crossalign;
    ObjectiveCheck out;
    const std::size_t k = c.model.embed_dim;
    for (std::uint64_t attempt = 0;; ++attempt) {
        ++out.attempts;
        // A redraw renews both the data and the initialization.
        ModelConfig mc = c.model;
        mc.init_seed += 7919 * attempt;
        ModelBundle model = init_params(mc);
        const std::uint64_t s = c.data_seed + 1000003 * attempt;
        const Tensor x = random_tensor({c.batch, c.model.channels, c.model.height, c.model.width}, s);
        std::vector<double> text = random_values(c.batch * k, s + 1);
        for (std::size_t i = 0; i < c.batch; ++i) {  // unit rows, like a normalized cache
            double n = 0.0;
            for (std::size_t j = 0; j < k; ++j) n += text[i * k + j] * text[i * k + j];
            for (std::size_t j = 0; j < k; ++j) text[i * k + j] /= std::sqrt(n);
        }
        const Tensor t({c.batch, k}, text);
        std::vector<std::size_t> labels(c.batch);
        for (std::size_t i = 0; i < c.batch; ++i) labels[i] = (s + i) % c.model.num_classes;

        auto objective = [&] {
            const Tensor f = forward_features(model, x);
            const Tensor ce = softmax_cross_entropy(classify(model, f), labels);
            const Tensor dist = distance_loss(t, f, model.param("projection.weight"), c.alignment.tau,
                                              c.alignment.normalize_projection);
            return total_objective(ce, dist, c.alignment.lambda);
        };
        model.zero_grad();
        const Tensor loss = objective();
        const bool near_kink = min_relu_margin(loss) < kMinReluMargin;
        // Central differences lose accuracy like h^2 / |Wf|^3 as a normalized projection nears zero.
        const bool near_singular = c.alignment.normalize_projection && c.alignment.lambda > 0.0 &&
                                   min_projection_norm(model, x) < kMinProjectionNorm;
        if ((near_kink || near_singular) && attempt < 50) continue;
        backward(loss);
        for (auto& p : model.params()) {
            for (double g : p.value.grad()) out.every_grad_finite = out.every_grad_finite && std::isfinite(g);
            out.parameters += p.value.size();
            out.max_rel_error = std::max(out.max_rel_error, max_fd_error(p.value, [&] {
                                             NoGradGuard guard;
                                             return objective().item();
                                         }));
        }
        return out;
    }
}

}  // namespace testing_support
