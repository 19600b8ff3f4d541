// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Labeled image datasets: the synthetic desk-scale task generator, id-based
// splitting, batching and the binary dataset file.
//
// Dataset file (little-endian): "GDST", u32 version = 1, u32 C, u32 H, u32 W,
// u32 num_classes, u32 N, N x {u16 id length, id bytes, u32 label},
// then N*C*H*W f32 pixels in sample order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "crossalign/binary_io.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/error.hpp"
#include "crossalign/rng.hpp"
#include "crossalign/tensor.hpp"

namespace crossalign {

struct ImageDataset {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t num_classes = 1;
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;
    std::vector<double> pixels;  // N x C x H x W

    std::size_t size() const { return ids.size(); }
    std::size_t sample_size() const { return channels * height * width; }

    std::span<const double> image(std::size_t i) const {
        return std::span<const double>(pixels).subspan(i * sample_size(), sample_size());
    }

    std::vector<ImageRef> refs() const {
        std::vector<ImageRef> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) out.push_back({ids[i], labels[i]});
        return out;
    }

    void validate() const {
        if (labels.size() != ids.size() || pixels.size() != ids.size() * sample_size()) {
            fail(ErrorKind::validation, "dataset arrays disagree on sample count");
        }
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < size(); ++i) {
            if (ids[i].empty()) fail(ErrorKind::validation, "dataset sample " + std::to_string(i) + " has empty id");
            if (!seen.insert(ids[i]).second) fail(ErrorKind::validation, "duplicate dataset id '" + ids[i] + "'");
            if (labels[i] >= num_classes) {
                fail(ErrorKind::validation, "sample '" + ids[i] + "' has label " + std::to_string(labels[i]) +
                                                " >= num_classes " + std::to_string(num_classes));
            }
        }
    }

    ImageDataset subset(std::span<const std::size_t> indices) const {
        ImageDataset out{channels, height, width, num_classes, {}, {}, {}};
        out.ids.reserve(indices.size());
        out.pixels.reserve(indices.size() * sample_size());
        for (std::size_t i : indices) {
            out.ids.push_back(ids.at(i));
            out.labels.push_back(labels.at(i));
            const auto img = image(i);
            out.pixels.insert(out.pixels.end(), img.begin(), img.end());
        }
        return out;
    }

    /// [B x C x H x W] tensor of the given samples (no gradient).
    Tensor batch(std::span<const std::size_t> indices) const {
        std::vector<double> data;
        data.reserve(indices.size() * sample_size());
        for (std::size_t i : indices) {
            const auto img = image(i);
            data.insert(data.end(), img.begin(), img.end());
        }
        return Tensor({indices.size(), channels, height, width}, std::move(data));
    }
};

struct DatasetSplit {
    ImageDataset train;
    ImageDataset val;
};

/// Validation = the last `val_fraction` of samples by sorted id; the rest train.
inline DatasetSplit split_by_sorted_id(const ImageDataset& data, double val_fraction = 0.2) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail(ErrorKind::config, "val_fraction must be in (0, 1)");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data.ids[a] < data.ids[b]; });
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(data.size())));
    if (n_val == 0 || n_val >= data.size()) {
        fail(ErrorKind::validation, "dataset of " + std::to_string(data.size()) + " samples is too small to split");
    }
    const std::size_t n_train = data.size() - n_val;
    return {data.subset(std::span(order).first(n_train)), data.subset(std::span(order).subspan(n_train))};
}

// ---------------------------------------------------------------------------
// Synthetic task: each class owns a smooth random prototype; a sample is the
// prototype circularly shifted by up to max_shift pixels, scaled by a random
// contrast, plus white noise. Labels cycle through the classes in id order.
// ---------------------------------------------------------------------------

struct SyntheticImageConfig {
    std::size_t num_classes = 10;
    std::size_t samples = 2500;
    std::size_t channels = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t max_shift = 1;
    double contrast_min = 0.5;
    double contrast_max = 1.5;
    double noise = 1.0;
    std::uint64_t seed = 0;
};

inline std::string sample_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img-%05zu", index);
    return buf;
}

inline ImageDataset make_synthetic_dataset(const SyntheticImageConfig& cfg) {
    if (cfg.num_classes == 0 || cfg.samples == 0 || cfg.channels == 0 || cfg.height == 0 || cfg.width == 0) {
        fail(ErrorKind::config, "synthetic dataset extents must be >= 1");
    }
    const std::size_t C = cfg.channels, H = cfg.height, W = cfg.width, plane = H * W;
    Rng proto_rng(combine_seeds(cfg.seed, 0x70726f746fULL));
    std::vector<std::vector<double>> prototypes(cfg.num_classes, std::vector<double>(C * plane));
    for (auto& proto : prototypes) {
        std::vector<double> raw(C * plane);
        for (double& x : raw) x = proto_rng.normal();
        // 3x3 circular box blur, then unit RMS.
        double sq = 0.0;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (std::size_t dy = 0; dy < 3; ++dy)
                        for (std::size_t dx = 0; dx < 3; ++dx)
                            acc += raw[c * plane + ((y + H + dy - 1) % H) * W + (x + W + dx - 1) % W];
                    proto[c * plane + y * W + x] = acc / 9.0;
                    sq += (acc / 9.0) * (acc / 9.0);
                }
        const double rms = std::sqrt(sq / static_cast<double>(proto.size()));
        for (double& x : proto) x /= rms;
    }

    ImageDataset data{C, H, W, cfg.num_classes, {}, {}, {}};
    data.ids.reserve(cfg.samples);
    data.pixels.reserve(cfg.samples * C * plane);
    Rng rng(combine_seeds(cfg.seed, 0x73616d706c65ULL));
    const auto span = static_cast<std::uint64_t>(2 * cfg.max_shift + 1);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const std::size_t label = i % cfg.num_classes;
        const std::size_t sy = static_cast<std::size_t>(rng.below(span));
        const std::size_t sx = static_cast<std::size_t>(rng.below(span));
        const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
        const auto& proto = prototypes[label];
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    const std::size_t py = (y + H * (cfg.max_shift + 1) + sy - cfg.max_shift) % H;
                    const std::size_t px = (x + W * (cfg.max_shift + 1) + sx - cfg.max_shift) % W;
                    const double v = contrast * proto[c * plane + py * W + px] + cfg.noise * rng.normal();
                    // Round through f32 so the in-memory dataset equals its saved form.
                    data.pixels.push_back(static_cast<double>(static_cast<float>(v)));
                }
        data.ids.push_back(sample_id(i));
        data.labels.push_back(label);
    }
    return data;
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDatasetMagic = "GDST";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const ImageDataset& data, const std::filesystem::path& path) {
    data.validate();
    ByteWriter w;
    w.put_bytes(kDatasetMagic);
    w.put<std::uint32_t>(kDatasetVersion);
    for (std::size_t v : {data.channels, data.height, data.width, data.num_classes, data.size()}) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(data.ids[i].size()));
        w.put_bytes(data.ids[i]);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(data.labels[i]));
    }
    for (double v : data.pixels) w.put<float>(static_cast<float>(v));
    write_file(path, w.bytes());
}

inline ImageDataset load_dataset(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    ByteReader r(bytes, "dataset '" + path.string() + "'");
    expect_magic(bytes, kDatasetMagic, path.string(), "a dataset file");
    r.get_bytes(4);
    if (const auto version = r.get<std::uint32_t>(); version != kDatasetVersion) {
        fail(ErrorKind::format, "'" + path.string() + "' has unsupported dataset version " + std::to_string(version));
    }
    ImageDataset data;
    data.channels = r.get<std::uint32_t>();
    data.height = r.get<std::uint32_t>();
    data.width = r.get<std::uint32_t>();
    data.num_classes = r.get<std::uint32_t>();
    const std::size_t n = r.get<std::uint32_t>();
    for (std::size_t i = 0; i < n; ++i) {
        const auto len = r.get<std::uint16_t>();
        data.ids.emplace_back(r.get_bytes(len));
        data.labels.push_back(r.get<std::uint32_t>());
    }
    const std::size_t count = n * data.sample_size();
    r.need(count * sizeof(float));
    if (r.remaining() != count * sizeof(float)) {
        fail(ErrorKind::format, "'" + path.string() + "' has trailing bytes");
    }
    data.pixels.resize(count);
    for (double& v : data.pixels) v = r.get<float>();
    data.validate();
    return data;
}

}  // namespace crossalign
