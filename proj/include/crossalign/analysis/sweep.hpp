// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Hyperparameter sweeps over lambda / tau and the short-vs-long description
// comparison. Every trial initializes a fresh model and trains it with the
// trial seed used for both initialization and shuffling.

#pragma once

#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "crossalign/dataset.hpp"
#include "crossalign/embedding_cache.hpp"
#include "crossalign/error.hpp"
#include "crossalign/models.hpp"
#include "crossalign/trainer.hpp"

namespace crossalign {

enum class SweepParam { lambda, tau };

inline std::string_view to_string(SweepParam p) { return p == SweepParam::lambda ? "lambda" : "tau"; }

inline SweepParam parse_sweep_param(std::string_view name) {
    if (name == "lambda") return SweepParam::lambda;
    if (name == "tau") return SweepParam::tau;
    fail(ErrorKind::usage, "unknown sweep parameter '" + std::string(name) + "' (expected lambda or tau)");
}

inline std::vector<double> default_lambda_grid() { return {0.0, 0.1, 0.3, 0.5, 0.75, 1.0}; }
inline std::vector<double> default_tau_grid() { return {0.1, 0.3, 0.5, 0.75, 1.0, 1.5}; }
inline std::vector<std::uint64_t> default_seeds() { return {1, 2, 3}; }

/// One experiment: model shape plus training recipe. Seeds are applied per trial.
struct Experiment {
    ModelConfig model;
    TrainConfig train;
};

struct SweepGrid {
    SweepParam param = SweepParam::lambda;
    std::vector<double> values = default_lambda_grid();
    Experiment base;  // the counterpart (tau for a lambda sweep, lambda for tau) is taken from here
    std::vector<std::uint64_t> seeds = default_seeds();

    void validate() const {
        if (values.empty()) fail(ErrorKind::config, "sweep grid has no values");
        if (std::set<double>(values.begin(), values.end()).size() != values.size()) {
            fail(ErrorKind::config, "sweep grid values must be distinct");
        }
        if (seeds.empty()) fail(ErrorKind::config, "sweep needs at least one seed");
    }
};

/// Trains a freshly initialized model; cache may be null only when lambda == 0.
inline TrainReport run_trial(const Experiment& exp, std::uint64_t seed, const DatasetSplit& data,
                             const EmbeddingCache* cache) {
    ModelConfig mc = exp.model;
    mc.init_seed = seed;
    TrainConfig tc = exp.train;
    tc.seed = seed;
    ModelBundle model = init_params(mc);
    return train(tc, data.train, data.val, cache, model);
}

struct TrialResult {
    std::uint64_t seed = 0;
    std::optional<double> val_top1;  // empty when the trial failed
    std::string diagnostic;
};

struct SweepRow {
    double value = 0.0;
    std::vector<TrialResult> trials;
    std::optional<double> mean_top1;
    std::optional<double> delta_vs_baseline;
};

struct SweepTable {
    SweepParam param = SweepParam::lambda;
    std::vector<SweepRow> rows;
    std::optional<double> baseline_mean;
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<TrialResult>& trials) {
    double total = 0.0;
    std::size_t ok = 0;
    for (const auto& t : trials) {
        if (t.val_top1) {
            total += *t.val_top1;
            ++ok;
        }
    }
    if (ok == 0) return std::nullopt;
    return total / static_cast<double>(ok);
}

inline std::vector<TrialResult> run_trials(const Experiment& exp, const std::vector<std::uint64_t>& seeds,
                                           const DatasetSplit& data, const EmbeddingCache* cache) {
    std::vector<TrialResult> out;
    for (std::uint64_t seed : seeds) {
        TrialResult r{seed, std::nullopt, {}};
        try {
            r.val_top1 = run_trial(exp, seed, data, cache).final_val_top1;
        } catch (const std::exception& e) {
            r.diagnostic = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace detail

/// One trial per (value, seed); rows follow grid order. The baseline is the
/// lambda = 0 row when the grid has one, otherwise dedicated lambda = 0 trials.
inline SweepTable run_sweep(const SweepGrid& grid, const DatasetSplit& data, const EmbeddingCache& cache) {
    grid.validate();
    SweepTable table;
    table.param = grid.param;
    std::optional<std::size_t> baseline_row;
    for (double value : grid.values) {
        Experiment exp = grid.base;
        if (grid.param == SweepParam::lambda) exp.train.alignment.lambda = value;
        else exp.train.alignment.tau = value;
        SweepRow row;
        row.value = value;
        row.trials = detail::run_trials(exp, grid.seeds, data, &cache);
        row.mean_top1 = detail::mean_of(row.trials);
        if (grid.param == SweepParam::lambda && value == 0.0) baseline_row = table.rows.size();
        table.rows.push_back(std::move(row));
    }
    if (baseline_row) {
        table.baseline_mean = table.rows[*baseline_row].mean_top1;
    } else {
        Experiment exp = grid.base;
        exp.train.alignment.lambda = 0.0;
        table.baseline_mean = detail::mean_of(detail::run_trials(exp, grid.seeds, data, nullptr));
    }
    for (auto& row : table.rows) {
        if (row.mean_top1 && table.baseline_mean) row.delta_vs_baseline = *row.mean_top1 - *table.baseline_mean;
    }
    return table;
}

/// Grid value with the highest mean top-1; the earliest row wins ties.
inline std::optional<double> best_value(const SweepTable& table) {
    std::optional<double> best, best_mean;
    for (const auto& row : table.rows) {
        if (row.mean_top1 && (!best_mean || *row.mean_top1 > *best_mean)) {
            best_mean = row.mean_top1;
            best = row.value;
        }
    }
    return best;
}

/// Per-trial section, a blank line, then the aggregate section.
inline std::string sweep_csv(const SweepTable& table) {
    const std::string param(to_string(table.param));
    std::string out = "param,value,seed,val_top1\n";
    char buf[160];
    for (const auto& row : table.rows) {
        for (const auto& t : row.trials) {
            if (t.val_top1) {
                std::snprintf(buf, sizeof buf, ",%.4f,%llu,%.4f\n", row.value, static_cast<unsigned long long>(t.seed),
                              *t.val_top1);
            } else {
                std::snprintf(buf, sizeof buf, ",%.4f,%llu,failed\n", row.value,
                              static_cast<unsigned long long>(t.seed));
            }
            out += param + buf;
        }
    }
    out += "\nparam,value,mean_top1,delta_vs_baseline\n";
    for (const auto& row : table.rows) {
        std::snprintf(buf, sizeof buf, ",%.4f,", row.value);
        out += param + buf;
        if (row.mean_top1) {
            std::snprintf(buf, sizeof buf, "%.4f,", *row.mean_top1);
            out += buf;
        } else {
            out += "failed,";
        }
        if (row.delta_vs_baseline) {
            std::snprintf(buf, sizeof buf, "%.4f\n", *row.delta_vs_baseline);
            out += buf;
        } else {
            out += "n/a\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Short vs long descriptions
// ---------------------------------------------------------------------------

struct ComparisonTable {
    std::string model;
    std::vector<std::uint64_t> seeds;
    std::vector<double> baseline, short_desc, long_desc;  // per seed
    double baseline_mean = 0.0, short_mean = 0.0, long_mean = 0.0;
};

/// Paired runs per seed that differ only in the cache (or its absence, for the baseline).
inline ComparisonTable short_vs_long_report(const DatasetSplit& data, const EmbeddingCache& cache_short,
                                            const EmbeddingCache& cache_long, const Experiment& exp,
                                            const std::vector<std::uint64_t>& seeds = default_seeds()) {
    if (cache_short.k() != cache_long.k()) {
        fail(ErrorKind::config, "short cache k = " + std::to_string(cache_short.k()) + " but long cache k = " +
                                    std::to_string(cache_long.k()));
    }
    if (seeds.empty()) fail(ErrorKind::config, "comparison needs at least one seed");
    ComparisonTable t;
    t.model = std::string(to_string(exp.model.arch));
    t.seeds = seeds;
    Experiment base = exp;
    base.train.alignment.lambda = 0.0;
    for (std::uint64_t seed : seeds) {
        t.baseline.push_back(run_trial(base, seed, data, nullptr).final_val_top1);
        t.short_desc.push_back(run_trial(exp, seed, data, &cache_short).final_val_top1);
        t.long_desc.push_back(run_trial(exp, seed, data, &cache_long).final_val_top1);
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    t.baseline_mean = mean(t.baseline);
    t.short_mean = mean(t.short_desc);
    t.long_mean = mean(t.long_desc);
    return t;
}

inline std::string comparison_csv(const ComparisonTable& t) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "model,baseline,short_description,long_description\n%s,%.4f,%.4f,%.4f\n",
                  t.model.c_str(), t.baseline_mean, t.short_mean, t.long_mean);
    return buf;
}

}  // namespace crossalign
