// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Vision backbone, fully-connected classifier head and the learnable
// projection from image features into the text-embedding space.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "crossalign/error.hpp"
#include "crossalign/rng.hpp"
#include "crossalign/tensor.hpp"

namespace crossalign {

enum class Arch : std::uint32_t { mlp = 0, tiny_cnn = 1 };

inline std::string_view to_string(Arch arch) { return arch == Arch::mlp ? "mlp" : "tiny_cnn"; }

inline Arch parse_arch(std::string_view name) {
    if (name == "mlp") return Arch::mlp;
    if (name == "tiny_cnn") return Arch::tiny_cnn;
    fail(ErrorKind::usage, "unknown architecture '" + std::string(name) + "' (expected mlp or tiny_cnn)");
}

struct ModelConfig {
    Arch arch = Arch::tiny_cnn;
    std::size_t channels = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t feature_dim = 64;  // d
    std::size_t num_classes = 10;
    std::size_t embed_dim = 16;    // k, must match the embedding cache
    std::uint64_t init_seed = 0;

    void validate() const {
        if (channels == 0 || height == 0 || width == 0 || feature_dim == 0 || num_classes == 0 || embed_dim == 0) {
            fail(ErrorKind::config, "model config extents must all be >= 1");
        }
        if (arch == Arch::tiny_cnn && (height < 2 || width < 2)) {
            fail(ErrorKind::config, "tiny_cnn needs input height and width >= 2 for its 2x2 pooling");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

inline constexpr std::size_t kCnnWidth1 = 8;
inline constexpr std::size_t kCnnWidth2 = 16;

struct Param {
    std::string name;
    Tensor value;
    bool decay = true;  // weight decay applies to weights, not biases
};

/// Backbone F, head G and projection W. Copies share parameter storage; use clone() for a snapshot.
class ModelBundle {
public:
    ModelBundle() = default;
    ModelBundle(ModelConfig config, std::vector<Param> params) : config_(config), params_(std::move(params)) {}

    const ModelConfig& config() const { return config_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }

    const Tensor& param(std::string_view name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.value;
        fail(ErrorKind::not_found, "no parameter named '" + std::string(name) + "'");
    }
    Tensor& param(std::string_view name) {
        return const_cast<Tensor&>(static_cast<const ModelBundle&>(*this).param(name));
    }

    ModelBundle clone() const {
        std::vector<Param> copy;
        copy.reserve(params_.size());
        for (const auto& p : params_) {
            copy.push_back({p.name, Tensor(p.value.shape(), {p.value.data().begin(), p.value.data().end()}, true),
                            p.decay});
        }
        return ModelBundle(config_, std::move(copy));
    }

    void zero_grad() {
        for (auto& p : params_) p.value.zero_grad();
    }

private:
    ModelConfig config_;
    std::vector<Param> params_;
};

namespace detail {

inline Param uniform_param(std::string name, Shape shape, double bound, Rng& rng) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = rng.uniform(-bound, bound);
    return {std::move(name), Tensor(std::move(shape), std::move(values), true), true};
}

inline Param zero_bias(std::string name, std::size_t n) {
    return {std::move(name), Tensor(Shape{n}, true), false};
}

inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
    if (x.rank() != 2 || x.dim(1) != weight.dim(1)) {
        fail(ErrorKind::dimension,
             "linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
    }
    Tensor y = matmul(x, transpose(weight));
    return bias ? add_bias(y, *bias) : y;
}

}  // namespace detail

/// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero, W ~ U[-1/sqrt(d), 1/sqrt(d)].
inline ModelBundle init_params(const ModelConfig& config) {
    config.validate();
    Rng rng(config.init_seed);
    const std::size_t d = config.feature_dim;
    auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    std::vector<Param> params;
    if (config.arch == Arch::mlp) {
        const std::size_t in = config.channels * config.height * config.width;
        const std::size_t hidden = 4 * d;
        params.push_back(detail::uniform_param("backbone.fc1.weight", {hidden, in}, bound(in), rng));
        params.push_back(detail::zero_bias("backbone.fc1.bias", hidden));
        params.push_back(detail::uniform_param("backbone.fc2.weight", {d, hidden}, bound(hidden), rng));
        params.push_back(detail::zero_bias("backbone.fc2.bias", d));
    } else {
        const std::size_t c = config.channels;
        params.push_back(detail::uniform_param("backbone.conv1.weight", {kCnnWidth1, c, 3, 3}, bound(c * 9), rng));
        params.push_back(detail::uniform_param("backbone.conv2.weight", {kCnnWidth2, kCnnWidth1, 3, 3},
                                               bound(kCnnWidth1 * 9), rng));
        params.push_back(detail::uniform_param("backbone.fc.weight", {d, kCnnWidth2}, bound(kCnnWidth2), rng));
        params.push_back(detail::zero_bias("backbone.fc.bias", d));
    }
    params.push_back(detail::uniform_param("head.weight", {config.num_classes, d}, bound(d), rng));
    params.push_back(detail::zero_bias("head.bias", config.num_classes));
    params.push_back(detail::uniform_param("projection.weight", {config.embed_dim, d}, bound(d), rng));
    return ModelBundle(config, std::move(params));
}

/// F: [B x C x H x W] -> f_img [B x d].
inline Tensor forward_features(const ModelBundle& model, const Tensor& x) {
    const ModelConfig& cfg = model.config();
    if (x.rank() != 4 || x.dim(1) != cfg.channels || x.dim(2) != cfg.height || x.dim(3) != cfg.width) {
        fail(ErrorKind::dimension, "forward_features: input " + shape_str(x.shape()) + " does not match [B x " +
                                       std::to_string(cfg.channels) + " x " + std::to_string(cfg.height) + " x " +
                                       std::to_string(cfg.width) + "]");
    }
    const std::size_t batch = x.dim(0);
    if (cfg.arch == Arch::mlp) {
        Tensor flat = reshape(x, {batch, cfg.channels * cfg.height * cfg.width});
        Tensor h = relu(detail::linear(flat, model.param("backbone.fc1.weight"), &model.param("backbone.fc1.bias")));
        return detail::linear(h, model.param("backbone.fc2.weight"), &model.param("backbone.fc2.bias"));
    }
    Tensor h = relu(conv2d(x, model.param("backbone.conv1.weight"), 1, 1));
    h = mean_pool2d(h, 2);
    h = relu(conv2d(h, model.param("backbone.conv2.weight"), 1, 1));
    h = global_mean_pool(h);
    return detail::linear(h, model.param("backbone.fc.weight"), &model.param("backbone.fc.bias"));
}

/// G: logits = f_img * weight^T + bias.
inline Tensor classify(const ModelBundle& model, const Tensor& features) {
    return detail::linear(features, model.param("head.weight"), &model.param("head.bias"));
}

/// Row i -> W * f_i, a k-vector. No bias.
inline Tensor project(const ModelBundle& model, const Tensor& features) {
    return detail::linear(features, model.param("projection.weight"), nullptr);
}

}  // namespace crossalign
