// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: SGD with momentum and weight decay, epoch-granular cosine
// learning-rate decay, per-epoch shuffles keyed by (seed, epoch), top-1
// evaluation, checkpoints and the per-epoch CSV report.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossalign/binary_io.hpp"
#include "crossalign/dataset.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/embedding_cache.hpp"
#include "crossalign/error.hpp"
#include "crossalign/losses.hpp"
#include "crossalign/models.hpp"
#include "crossalign/rng.hpp"
#include "crossalign/tensor.hpp"

namespace crossalign {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double base_lr = 0.05;
    double min_lr = 0.0;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    AlignmentConfig alignment;
    std::size_t eval_every = 1;

    void validate() const {
        if (epochs == 0) fail(ErrorKind::config, "epochs must be >= 1");
        if (batch_size == 0) fail(ErrorKind::config, "batch_size must be >= 1");
        if (!(base_lr >= 0.0) || !(min_lr >= 0.0) || min_lr > base_lr) {
            fail(ErrorKind::config, "learning rates must satisfy 0 <= min_lr <= base_lr");
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::config, "momentum must be in [0, 1)");
        if (!(weight_decay >= 0.0)) fail(ErrorKind::config, "weight_decay must be >= 0");
        if (eval_every == 0) fail(ErrorKind::config, "eval_every must be >= 1");
        alignment.validate();
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double ce_loss = 0.0;
    double dist_loss = 0.0;
    double total_loss = 0.0;
    double train_top1 = 0.0;
    double val_top1 = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double final_val_top1 = 0.0;
    double wall_seconds = 0.0;  // not part of equality

    bool operator==(const TrainReport& other) const {
        return epochs == other.epochs && final_val_top1 == other.final_val_top1;
    }
};

/// lr(e) = min + (base - min) * (1 + cos(pi * e / (epochs - 1))) / 2; base_lr when epochs == 1.
inline double cosine_lr(std::size_t epoch, const TrainConfig& config) {
    if (epoch >= config.epochs) {
        fail(ErrorKind::usage, "cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                   std::to_string(config.epochs) + ")");
    }
    if (config.epochs == 1) return config.base_lr;
    const double t = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
    return config.min_lr + 0.5 * (config.base_lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

/// g' = g + wd * w;  v = momentum * v + g';  w = w - lr * v.
inline void sgd_step(std::span<double> weights, std::span<const double> grads, std::span<double> velocity, double lr,
                     double momentum, double weight_decay) {
    if (weights.size() != grads.size() || weights.size() != velocity.size()) {
        fail(ErrorKind::dimension, "sgd_step: weights, grads and velocity differ in length");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double g = grads[i] + weight_decay * weights[i];
        velocity[i] = momentum * velocity[i] + g;
        weights[i] -= lr * velocity[i];
    }
}

struct SgdState {
    std::vector<std::vector<double>> velocity;  // one buffer per model parameter, same order

    bool operator==(const SgdState&) const = default;
};

inline SgdState make_sgd_state(const ModelBundle& model) {
    SgdState s;
    for (const auto& p : model.params()) s.velocity.emplace_back(p.value.size(), 0.0);
    return s;
}

inline void apply_sgd(ModelBundle& model, SgdState& state, double lr, const TrainConfig& config) {
    auto& params = model.params();
    if (state.velocity.size() != params.size()) state = make_sgd_state(model);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.value.has_grad()) continue;
        sgd_step(p.value.mutable_data(), p.value.grad(), state.velocity[i], lr, config.momentum,
                 p.decay ? config.weight_decay : 0.0);
    }
}

/// Number of rows whose argmax (ties -> lowest index) equals the label.
inline std::size_t count_top1(std::span<const double> logits, std::size_t num_classes,
                              std::span<const std::size_t> labels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* row = &logits[i * num_classes];
        std::size_t best = 0;
        for (std::size_t j = 1; j < num_classes; ++j)
            if (row[j] > row[best]) best = j;
        hits += (best == labels[i]) ? 1 : 0;
    }
    return hits;
}

inline double top1_accuracy(std::span<const double> logits, std::size_t num_classes,
                            std::span<const std::size_t> labels) {
    if (labels.empty()) fail(ErrorKind::usage, "top-1 accuracy of an empty set");
    if (logits.size() != labels.size() * num_classes) {
        fail(ErrorKind::dimension, "top1_accuracy: logits do not match labels x classes");
    }
    return static_cast<double>(count_top1(logits, num_classes, labels)) / static_cast<double>(labels.size());
}

inline double evaluate(const ModelBundle& model, const ImageDataset& data, std::size_t batch_size = 256) {
    if (data.size() == 0) fail(ErrorKind::usage, "evaluate: empty evaluation set");
    NoGradGuard no_grad;
    std::size_t hits = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor logits = classify(model, forward_features(model, data.batch(idx)));
        hits += count_top1(logits.data(), model.config().num_classes,
                           std::span(data.labels).subspan(start, end - start));
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Visit order of the training samples in `epoch`; depends only on (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(combine_seeds(seed, 0x65706f6368ULL + epoch));
    rng.shuffle(std::span(order));
    return order;
}

/// Everything needed to continue a run after the last completed epoch.
struct TrainState {
    SgdState optimizer;
    std::size_t epochs_completed = 0;
    std::vector<EpochRecord> records;

    bool operator==(const TrainState&) const = default;
};

struct TrainOptions {
    /// Return after this many epochs have completed (for interrupted runs).
    std::optional<std::size_t> stop_after;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains `model` in place. `cache == nullptr` removes the alignment path
/// entirely (baseline); with a cache, lambda == 0 also skips the distance term.
inline TrainReport train(const TrainConfig& config, const ImageDataset& train_set, const ImageDataset& val_set,
                         const EmbeddingCache* cache, ModelBundle& model, TrainState& state,
                         const TrainOptions& options = {}) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const ModelConfig& mc = model.config();
    if (train_set.size() == 0) fail(ErrorKind::usage, "train: empty training set");
    if (val_set.size() == 0) fail(ErrorKind::usage, "train: empty validation set");
    if (train_set.channels != mc.channels || train_set.height != mc.height || train_set.width != mc.width) {
        fail(ErrorKind::dimension, "train: dataset images do not match the model input shape");
    }
    const bool aligned = cache != nullptr && config.alignment.lambda > 0.0;
    if (cache == nullptr && config.alignment.lambda > 0.0) {
        fail(ErrorKind::usage, "train: lambda > 0 requires an embedding cache");
    }

    // Pre-flight: every training id must have a cached embedding.
    std::vector<std::size_t> text_rows;
    if (aligned) {
        if (cache->k() != mc.embed_dim) {
            fail(ErrorKind::validation, "cache k = " + std::to_string(cache->k()) + " but model k = " +
                                            std::to_string(mc.embed_dim));
        }
        std::vector<std::string> missing;
        for (const auto& id : train_set.ids)
            if (!cache->contains(id)) missing.push_back(id);
        if (!missing.empty()) {
            std::string msg = std::to_string(missing.size()) + " training id(s) missing from the embedding cache: ";
            for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i) msg += (i ? ", " : "") + missing[i];
            fail(ErrorKind::validation, msg);
        }
        text_rows.reserve(train_set.size());
        for (const auto& id : train_set.ids) text_rows.push_back(cache->row_index(id));
    }

    if (state.optimizer.velocity.size() != model.params().size()) state.optimizer = make_sgd_state(model);
    if (state.records.size() != state.epochs_completed) fail(ErrorKind::usage, "train: inconsistent resume state");

    const std::size_t k = mc.embed_dim;
    for (std::size_t epoch = state.epochs_completed; epoch < config.epochs; ++epoch) {
        if (options.stop_after && epoch >= *options.stop_after) break;
        const double lr = cosine_lr(epoch, config);
        const auto order = epoch_order(train_set.size(), config.seed, epoch);
        double ce_sum = 0.0, dist_sum = 0.0, total_sum = 0.0;
        std::size_t hits = 0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<std::size_t> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(train_set.labels[i]);

            const Tensor features = forward_features(model, train_set.batch(idx));
            const Tensor logits = classify(model, features);
            const Tensor ce = softmax_cross_entropy(logits, labels);
            Tensor loss = ce;
            double dist_value = 0.0;
            if (aligned) {
                std::vector<double> text(idx.size() * k);
                for (std::size_t r = 0; r < idx.size(); ++r) {
                    const auto row = cache->row(text_rows[idx[r]]);
                    for (std::size_t c = 0; c < k; ++c) text[r * k + c] = row[c];
                }
                const Tensor dist =
                    distance_loss(Tensor({idx.size(), k}, std::move(text)), features,
                                  model.param("projection.weight"), config.alignment.tau,
                                  config.alignment.normalize_projection);
                dist_value = dist.item();
                loss = total_objective(ce, dist, config.alignment.lambda);
            }
            if (!std::isfinite(loss.item())) {
                fail(ErrorKind::numerical, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(batch_no));
            }
            model.zero_grad();
            backward(loss);
            apply_sgd(model, state.optimizer, lr, config);

            const auto weight = static_cast<double>(idx.size());
            ce_sum += weight * ce.item();
            dist_sum += weight * dist_value;
            total_sum += weight * loss.item();
            hits += count_top1(logits.data(), mc.num_classes, labels);
        }
        const auto n = static_cast<double>(train_set.size());
        EpochRecord rec{epoch, lr, ce_sum / n, dist_sum / n, total_sum / n, static_cast<double>(hits) / n, 0.0};
        const bool eval_now = epoch == 0 || (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
        rec.val_top1 = eval_now ? evaluate(model, val_set) : state.records.back().val_top1;
        state.records.push_back(rec);
        state.epochs_completed = epoch + 1;
        if (options.on_epoch) options.on_epoch(rec);
    }

    TrainReport report;
    report.epochs = state.records;
    report.final_val_top1 = report.epochs.empty() ? 0.0 : report.epochs.back().val_top1;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

inline TrainReport train(const TrainConfig& config, const ImageDataset& train_set, const ImageDataset& val_set,
                         const EmbeddingCache* cache, ModelBundle& model, const TrainOptions& options = {}) {
    TrainState state;
    return train(config, train_set, val_set, cache, model, state, options);
}

// ---------------------------------------------------------------------------
// Report CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kReportHeader = "epoch,lr,ce_loss,dist_loss,total_loss,train_top1,val_top1";

inline std::string report_csv(const TrainReport& report) {
    std::string out = std::string(kReportHeader) + "\n";
    char line[256];
    for (const auto& r : report.epochs) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.lr, r.ce_loss,
                      r.dist_loss, r.total_loss, r.train_top1, r.val_top1);
        out += line;
    }
    return out;
}

inline void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
    write_file(path, report_csv(report));
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// "GCKP", u32 version = 1,
// u32 arch, u32 C, u32 H, u32 W, u32 d, u32 num_classes, u32 k, u64 init_seed,
// u32 P, P x tensor, u32 V, V x tensor (optimizer velocity, same names),
// u32 epochs_completed, u32 R, R x {u32 epoch, 6 x f64 (lr, ce, dist, total, train_top1, val_top1)}
// tensor = {u16 name length, name bytes, u32 rank, rank x u32 extent, f64 values}
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "GCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelBundle model;
    TrainState state;
};

namespace detail {

inline void put_tensor(ByteWriter& w, const std::string& name, const Shape& shape, std::span<const double> values) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
    for (double v : values) w.put<double>(v);
}

struct RawTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

inline RawTensor get_tensor(ByteReader& r) {
    RawTensor t;
    t.name = std::string(r.get_bytes(r.get<std::uint16_t>()));
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) fail(ErrorKind::format, "checkpoint tensor '" + t.name + "' has implausible rank");
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.get<std::uint32_t>());
    const std::size_t n = shape_numel(t.shape);
    r.need(n * sizeof(double));
    t.values.resize(n);
    for (double& v : t.values) v = r.get<double>();
    return t;
}

}  // namespace detail

inline std::string serialize_checkpoint(const ModelBundle& model, const TrainState& state) {
    const ModelConfig& c = model.config();
    ByteWriter w;
    w.put_bytes(kCheckpointMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.arch));
    for (std::size_t v : {c.channels, c.height, c.width, c.feature_dim, c.num_classes, c.embed_dim}) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    }
    w.put<std::uint64_t>(c.init_seed);
    const auto& params = model.params();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) detail::put_tensor(w, p.name, p.value.shape(), p.value.data());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state.optimizer.velocity.size()));
    for (std::size_t i = 0; i < state.optimizer.velocity.size(); ++i) {
        detail::put_tensor(w, params.at(i).name, params.at(i).value.shape(), state.optimizer.velocity[i]);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state.epochs_completed));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state.records.size()));
    for (const auto& r : state.records) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(r.epoch));
        for (double v : {r.lr, r.ce_loss, r.dist_loss, r.total_loss, r.train_top1, r.val_top1}) w.put<double>(v);
    }
    return w.bytes();
}

inline Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source = "<memory>") {
    expect_magic(bytes, kCheckpointMagic, source, "a checkpoint");
    ByteReader r(bytes, "checkpoint '" + source + "'");
    r.get_bytes(4);
    if (const auto version = r.get<std::uint32_t>(); version != kCheckpointVersion) {
        fail(ErrorKind::format, "'" + source + "' has unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig cfg;
    const auto arch = r.get<std::uint32_t>();
    if (arch > 1) fail(ErrorKind::format, "'" + source + "' names unknown architecture " + std::to_string(arch));
    cfg.arch = static_cast<Arch>(arch);
    cfg.channels = r.get<std::uint32_t>();
    cfg.height = r.get<std::uint32_t>();
    cfg.width = r.get<std::uint32_t>();
    cfg.feature_dim = r.get<std::uint32_t>();
    cfg.num_classes = r.get<std::uint32_t>();
    cfg.embed_dim = r.get<std::uint32_t>();
    cfg.init_seed = r.get<std::uint64_t>();
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(ErrorKind::format, "'" + source + "': " + e.message());
    }

    // The expected parameter layout comes from the architecture itself.
    ModelBundle model = init_params(cfg);
    auto& params = model.params();
    const auto read_block = [&](std::string_view what) {
        const auto count = r.get<std::uint32_t>();
        std::vector<std::vector<double>> values;
        if (count == 0 && what == "velocity") return values;
        if (count != params.size()) {
            fail(ErrorKind::format, "'" + source + "' holds " + std::to_string(count) + " " + std::string(what) +
                                        " tensors, architecture needs " + std::to_string(params.size()));
        }
        for (std::uint32_t i = 0; i < count; ++i) {
            detail::RawTensor t = detail::get_tensor(r);
            if (t.name != params[i].name || t.shape != params[i].value.shape()) {
                fail(ErrorKind::format, "'" + source + "' " + std::string(what) + " tensor " + std::to_string(i) +
                                            " is '" + t.name + "' " + shape_str(t.shape) + ", expected '" +
                                            params[i].name + "' " + shape_str(params[i].value.shape()));
            }
            values.push_back(std::move(t.values));
        }
        return values;
    };
    auto weights = read_block("parameter");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i].value.mutable_data();
        std::copy(weights[i].begin(), weights[i].end(), dst.begin());
    }
    auto velocity = read_block("velocity");
    Checkpoint ck{std::move(model), {}};
    ck.state.optimizer.velocity = std::move(velocity);
    ck.state.epochs_completed = r.get<std::uint32_t>();
    const auto records = r.get<std::uint32_t>();
    r.need(static_cast<std::size_t>(records) * (4 + 6 * 8));
    for (std::uint32_t i = 0; i < records; ++i) {
        EpochRecord rec;
        rec.epoch = r.get<std::uint32_t>();
        rec.lr = r.get<double>();
        rec.ce_loss = r.get<double>();
        rec.dist_loss = r.get<double>();
        rec.total_loss = r.get<double>();
        rec.train_top1 = r.get<double>();
        rec.val_top1 = r.get<double>();
        ck.state.records.push_back(rec);
    }
    if (r.remaining() != 0) fail(ErrorKind::format, "'" + source + "' has trailing bytes");
    if (ck.state.records.size() != ck.state.epochs_completed) {
        fail(ErrorKind::format, "'" + source + "' epoch count disagrees with its records");
    }
    return ck;
}

inline void save_checkpoint(const ModelBundle& model, const TrainState& state, const std::filesystem::path& path) {
    write_file(path, serialize_checkpoint(model, state));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path), path.string());
}

}  // namespace crossalign
