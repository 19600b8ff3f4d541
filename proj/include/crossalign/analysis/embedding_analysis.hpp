// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Class-sampled t-SNE of cached text embeddings with cluster-quality scores.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crossalign/analysis/tsne.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/embedding_cache.hpp"
#include "crossalign/error.hpp"
#include "crossalign/rng.hpp"

namespace crossalign {

struct AnalysisOptions {
    std::size_t classes = 50;
    std::size_t per_class = 250;
    std::uint64_t seed = 0;  // sampling seed
    TsneConfig tsne;
};

struct AnalysisResult {
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;
    std::vector<double> points;  // N x 2
    double initial_kl = 0.0;
    double final_kl = 0.0;
    std::optional<double> silhouette;  // not applicable unless 2 <= clusters <= N - 1
    double purity = 0.0;
};

/// Fraction of points whose nearest class centroid is their own class.
inline double nearest_centroid_purity(std::span<const double> X, std::size_t dim, std::span<const std::size_t> labels) {
    const std::size_t n = labels.size();
    if (n == 0) fail(ErrorKind::usage, "purity of an empty point set");
    std::map<std::size_t, std::vector<double>> centroids;
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = centroids[labels[i]];
        c.resize(dim, 0.0);
        for (std::size_t d = 0; d < dim; ++d) c[d] += X[i * dim + d];
        ++counts[labels[i]];
    }
    for (auto& [label, c] : centroids)
        for (double& v : c) v /= static_cast<double>(counts[label]);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_label = 0;
        for (const auto& [label, c] : centroids) {
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) s += (X[i * dim + d] - c[d]) * (X[i * dim + d] - c[d]);
            if (s < best) {
                best = s;
                best_label = label;
            }
        }
        hits += best_label == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

/// Mean silhouette (Euclidean); singleton clusters score 0. Undefined unless 2 <= #clusters <= N - 1.
inline std::optional<double> silhouette_score(std::span<const double> X, std::size_t dim,
                                              std::span<const std::size_t> labels) {
    const std::size_t n = labels.size();
    std::map<std::size_t, std::size_t> sizes;
    for (std::size_t l : labels) ++sizes[l];
    if (sizes.size() < 2 || sizes.size() > n - 1) return std::nullopt;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] == 1) continue;
        std::map<std::size_t, double> dist_sum;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) s += (X[i * dim + d] - X[j * dim + d]) * (X[i * dim + d] - X[j * dim + d]);
            dist_sum[labels[j]] += std::sqrt(s);
        }
        const double a = dist_sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, s] : dist_sum)
            if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

/// Seeded sample of `classes` classes x `per_class` rows, embedded with t-SNE.
inline AnalysisResult embedding_analysis(const EmbeddingCache& cache, std::span<const ImageRef> labelled,
                                         const AnalysisOptions& options) {
    std::unordered_map<std::string, std::size_t> label_of;
    for (const auto& r : labelled) label_of.emplace(r.id, r.class_label);
    std::map<std::size_t, std::vector<std::size_t>> rows_by_class;
    for (std::size_t i = 0; i < cache.size(); ++i) {
        auto it = label_of.find(cache.ids()[i]);
        if (it == label_of.end()) fail(ErrorKind::validation, "no label for cached id '" + cache.ids()[i] + "'");
        rows_by_class[it->second].push_back(i);
    }
    if (options.classes == 0 || options.per_class == 0) fail(ErrorKind::config, "classes and per_class must be >= 1");
    if (rows_by_class.size() < options.classes) {
        fail(ErrorKind::validation, "cannot sample " + std::to_string(options.classes) + " classes: cache has " +
                                        std::to_string(rows_by_class.size()));
    }
    std::vector<std::size_t> classes;
    for (const auto& [label, _] : rows_by_class) classes.push_back(label);
    Rng rng(combine_seeds(options.seed, 0x73616d706c65ULL));
    rng.shuffle(std::span(classes));
    classes.resize(options.classes);
    std::sort(classes.begin(), classes.end());

    AnalysisResult out;
    std::vector<double> X;
    for (std::size_t label : classes) {
        auto rows = rows_by_class[label];
        if (rows.size() < options.per_class) {
            fail(ErrorKind::validation, "class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                                            " rows, " + std::to_string(options.per_class) + " requested per class");
        }
        rng.shuffle(std::span(rows));
        rows.resize(options.per_class);
        std::sort(rows.begin(), rows.end());
        for (std::size_t r : rows) {
            out.ids.push_back(cache.ids()[r]);
            out.labels.push_back(label);
            for (float v : cache.row(r)) X.push_back(v);
        }
    }
    TsneResult t = tsne(X, out.labels.size(), cache.k(), options.tsne);
    out.points = std::move(t.Y);
    out.initial_kl = t.initial_kl;
    out.final_kl = t.final_kl;
    out.silhouette = silhouette_score(out.points, 2, out.labels);
    out.purity = nearest_centroid_purity(out.points, 2, out.labels);
    return out;
}

/// id,label,x,y per point.
inline std::string points_csv(const AnalysisResult& result) {
    std::string out = "id,label,x,y\n";
    char buf[128];
    for (std::size_t i = 0; i < result.labels.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f\n", result.labels[i], result.points[2 * i],
                      result.points[2 * i + 1]);
        out += result.ids[i] + buf;
    }
    return out;
}

}  // namespace crossalign
