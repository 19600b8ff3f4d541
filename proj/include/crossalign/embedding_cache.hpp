// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Precomputed text embeddings, one row per image id, persisted before training
// and loaded read-only by the trainer.
//
// Binary layout (little-endian, no padding):
//   0..3   magic "GEMB"
//   4..7   u32 version = 1
//   8..11  u32 k
//   12..15 u32 N
//   N x { u16 id byte length, id bytes }
//   N*k f32, row-major

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crossalign/binary_io.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/error.hpp"
#include "crossalign/rng.hpp"

namespace crossalign {

inline constexpr std::string_view kCacheMagic = "GEMB";
inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr std::size_t kCacheHeaderBytes = 16;

class EmbeddingCache {
public:
    EmbeddingCache() = default;

    /// Validates ids (nonempty, unique, <= 65535 bytes), shape and finiteness.
    EmbeddingCache(std::size_t k, std::vector<std::string> ids, std::vector<float> matrix)
        : k_(k), ids_(std::move(ids)), matrix_(std::move(matrix)) {
        if (k_ == 0) fail(ErrorKind::validation, "embedding dimension k must be >= 1");
        if (matrix_.size() != ids_.size() * k_) {
            fail(ErrorKind::validation, "matrix holds " + std::to_string(matrix_.size()) + " floats, expected " +
                                            std::to_string(ids_.size()) + " x " + std::to_string(k_));
        }
        index_.reserve(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (ids_[i].empty()) fail(ErrorKind::validation, "empty image id at cache row " + std::to_string(i));
            if (ids_[i].size() > std::numeric_limits<std::uint16_t>::max()) {
                fail(ErrorKind::validation, "image id at row " + std::to_string(i) + " exceeds 65535 bytes");
            }
            if (!index_.emplace(ids_[i], i).second) {
                fail(ErrorKind::validation, "duplicate image id '" + ids_[i] + "' in cache index");
            }
        }
        for (std::size_t i = 0; i < matrix_.size(); ++i) {
            if (!std::isfinite(matrix_[i])) {
                fail(ErrorKind::validation, "non-finite entry in cache row for '" + ids_[i / k_] + "'");
            }
        }
    }

    std::size_t k() const { return k_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    std::span<const float> matrix() const { return matrix_; }

    std::span<const float> row(std::size_t i) const { return std::span<const float>(matrix_).subspan(i * k_, k_); }

    bool contains(const std::string& id) const { return index_.contains(id); }

    std::size_t row_index(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) fail(ErrorKind::not_found, "image id '" + id + "' not in embedding cache");
        return it->second;
    }

    std::span<const float> lookup(const std::string& id) const { return row(row_index(id)); }

    bool operator==(const EmbeddingCache& other) const {
        return k_ == other.k_ && ids_ == other.ids_ && matrix_ == other.matrix_;
    }

private:
    std::size_t k_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> matrix_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> encode(std::string_view text) = 0;
};

/// Unit vector fixed by (class_label, seed).
inline std::vector<double> class_anchor(std::size_t class_label, std::size_t k, std::uint64_t seed) {
    Rng rng(combine_seeds(seed, 0x616e63686f72ULL + class_label));
    std::vector<double> v(k);
    double sq = 0.0;
    do {
        sq = 0.0;
        for (double& x : v) {
            x = rng.normal();
            sq += x * x;
        }
    } while (sq == 0.0);
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
    return v;
}

/// Class anchor plus an isotropic Gaussian perturbation keyed by (text, seed),
/// renormalized. Each coordinate of the perturbation has standard deviation
/// noise_sigma / sqrt(k), so noise_sigma is the expected perturbation norm.
inline std::vector<double> synthetic_encoder(std::string_view text, std::size_t class_label, std::size_t k,
                                             double noise_sigma, std::uint64_t seed) {
    if (k < 2) fail(ErrorKind::config, "synthetic encoder needs k >= 2");
    if (!(noise_sigma >= 0.0)) fail(ErrorKind::config, "noise_sigma must be >= 0");
    std::vector<double> v = class_anchor(class_label, k, seed);
    if (noise_sigma == 0.0) return v;
    Rng rng(combine_seeds(seed, fnv1a(text)));
    const double per_coord = noise_sigma / std::sqrt(static_cast<double>(k));
    double sq = 0.0;
    for (double& x : v) {
        x += per_coord * rng.normal();
        sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm == 0.0) return v;
    for (double& x : v) x /= norm;
    return v;
}

/// Text-only encoder over stub descriptions: recovers the class from the class
/// noun in the text and applies synthetic_encoder().
class SyntheticEncoder final : public TextEncoder {
public:
    SyntheticEncoder(std::size_t k, double noise_sigma, std::uint64_t seed)
        : k_(k), noise_sigma_(noise_sigma), seed_(seed) {}

    std::string name() const override { return "synthetic"; }

    std::vector<double> encode(std::string_view text) override {
        const auto label = find_class_noun(text);
        if (!label) {
            fail(ErrorKind::validation, "synthetic encoder: no class noun found in text \"" +
                                            std::string(text.substr(0, 60)) + "\"");
        }
        return synthetic_encoder(text, *label, k_, noise_sigma_, seed_);
    }

private:
    std::size_t k_;
    double noise_sigma_;
    std::uint64_t seed_;
};

/// One row per record in sorted-id order, L2-normalized when `normalize` is set.
inline EmbeddingCache build_cache(const DescriptionSet& set, TextEncoder& encoder, bool normalize = true) {
    if (set.empty()) fail(ErrorKind::validation, "build_cache: empty description set");
    std::size_t k = 0;
    std::vector<std::string> ids;
    std::vector<float> matrix;
    ids.reserve(set.size());
    for (const auto& [id, rec] : set.records()) {
        std::vector<double> v = encoder.encode(rec.text);
        if (k == 0) {
            if (v.empty()) fail(ErrorKind::validation, "encoder '" + encoder.name() + "' returned an empty vector");
            k = v.size();
            matrix.reserve(set.size() * k);
        } else if (v.size() != k) {
            fail(ErrorKind::validation, "encoder dimension drift: '" + id + "' has " + std::to_string(v.size()) +
                                            " dims, earlier rows had " + std::to_string(k));
        }
        if (normalize) {
            double sq = 0.0;
            for (double x : v) sq += x * x;
            const double norm = std::sqrt(sq);
            if (!(norm > 0.0)) fail(ErrorKind::degenerate, "zero embedding for image id '" + id + "'");
            for (double& x : v) x /= norm;
        }
        for (double x : v) matrix.push_back(static_cast<float>(x));
        ids.push_back(id);
    }
    return EmbeddingCache(k, std::move(ids), std::move(matrix));
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

inline std::string serialize_cache(const EmbeddingCache& cache) {
    ByteWriter w;
    w.put_bytes(kCacheMagic);
    w.put<std::uint32_t>(kCacheVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cache.k()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cache.size()));
    for (const auto& id : cache.ids()) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
        w.put_bytes(id);
    }
    for (float x : cache.matrix()) w.put<float>(x);
    return w.bytes();
}

inline EmbeddingCache parse_cache(std::string_view bytes, const std::string& source = "<memory>") {
    ByteReader r(bytes, "embedding cache '" + source + "'");
    expect_magic(bytes, kCacheMagic, source, "an embedding cache");
    r.get_bytes(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kCacheVersion) {
        fail(ErrorKind::format, "'" + source + "' has unsupported cache version " + std::to_string(version));
    }
    const auto k = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    std::vector<std::string> ids;
    ids.reserve(std::min<std::size_t>(n, r.remaining() / 2));  // a corrupt count must not allocate blindly
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto len = r.get<std::uint16_t>();
        ids.emplace_back(r.get_bytes(len));
    }
    const std::size_t floats = static_cast<std::size_t>(n) * k;
    r.need(floats * sizeof(float));
    if (r.remaining() != floats * sizeof(float)) {
        fail(ErrorKind::truncation, "'" + source + "' has " + std::to_string(r.remaining() - floats * sizeof(float)) +
                                        " bytes beyond the declared " + std::to_string(n) + " x " + std::to_string(k) +
                                        " matrix");
    }
    std::vector<float> matrix(floats);
    for (float& x : matrix) x = r.get<float>();
    return EmbeddingCache(k, std::move(ids), std::move(matrix));
}

inline void write_cache(const EmbeddingCache& cache, const std::filesystem::path& path) {
    write_file(path, serialize_cache(cache));
}

inline EmbeddingCache read_cache(const std::filesystem::path& path) {
    return parse_cache(read_file(path), path.string());
}

}  // namespace crossalign
