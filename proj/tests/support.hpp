// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations for the tests. Nothing here calls into
// the library's math; oracles work on plain vectors in long double.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "crossalign/tensor.hpp"

namespace testing_support {

using crossalign::Tensor;

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (double& v : out) v = dist(gen);
    return out;
}

inline Tensor random_tensor(crossalign::Shape shape, std::uint64_t seed, bool requires_grad = false) {
    const std::size_t n = crossalign::shape_numel(shape);
    return Tensor(std::move(shape), random_values(n, seed), requires_grad);
}

/// C = A[m x n] * B[n x p], triple loop in long double.
inline std::vector<long double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                              std::size_t m, std::size_t n, std::size_t p) {
    std::vector<long double> c(m * p, 0.0L);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            long double s = 0.0L;
            for (std::size_t k = 0; k < n; ++k) s += static_cast<long double>(a[i * n + k]) * b[k * p + j];
            c[i * p + j] = s;
        }
    return c;
}

/// Direct summation cross-correlation with zero padding.
inline std::vector<long double> conv2d_oracle(const std::vector<double>& x, const std::vector<double>& w,
                                              std::size_t B, std::size_t C, std::size_t H, std::size_t W,
                                              std::size_t O, std::size_t KH, std::size_t KW, std::size_t stride,
                                              std::size_t pad) {
    const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
    std::vector<long double> out(B * O * OH * OW, 0.0L);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    long double s = 0.0L;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < KH; ++ky)
                            for (std::size_t kx = 0; kx < KW; ++kx) {
                                const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                                const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(H) || ix >= static_cast<long long>(W))
                                    continue;
                                s += static_cast<long double>(x[((b * C + c) * H + iy) * W + ix]) *
                                     w[((o * C + c) * KH + ky) * KW + kx];
                            }
                    out[((b * O + o) * OH + oy) * OW + ox] = s;
                }
    return out;
}

/// Mean over rows of -log softmax(row)[label], long double, max-shifted.
inline long double cross_entropy_oracle(const std::vector<double>& logits, std::size_t B, std::size_t C,
                                        const std::vector<std::size_t>& labels) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < B; ++i) {
        long double mx = logits[i * C];
        for (std::size_t j = 1; j < C; ++j) mx = std::max<long double>(mx, logits[i * C + j]);
        long double z = 0.0L;
        for (std::size_t j = 0; j < C; ++j) z += std::exp(static_cast<long double>(logits[i * C + j]) - mx);
        total += -(static_cast<long double>(logits[i * C + labels[i]]) - mx - std::log(z));
    }
    return total / static_cast<long double>(B);
}

/// Image-anchored InfoNCE evaluated term by term:
/// p_i = W f_i (optionally unit length), L_i = -log(exp(t_i.p_i/tau) / sum_j exp(t_j.p_i/tau)).
inline long double infonce_oracle(const std::vector<double>& text, const std::vector<double>& feats,
                                  const std::vector<double>& W, std::size_t B, std::size_t k, std::size_t d,
                                  double tau, bool normalize) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < B; ++i) {
        std::vector<long double> p(k, 0.0L);
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < d; ++c) p[r] += static_cast<long double>(W[r * d + c]) * feats[i * d + c];
        if (normalize) {
            long double n = 0.0L;
            for (long double v : p) n += v * v;
            n = std::sqrt(n);
            for (long double& v : p) v /= n;
        }
        std::vector<long double> sims(B);
        for (std::size_t j = 0; j < B; ++j) {
            long double s = 0.0L;
            for (std::size_t r = 0; r < k; ++r) s += static_cast<long double>(text[j * k + r]) * p[r];
            sims[j] = s / tau;
        }
        long double denom = 0.0L;
        for (long double s : sims) denom += std::exp(s);
        total += -std::log(std::exp(sims[i]) / denom);
    }
    return total / static_cast<long double>(B);
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps round-off on near-zero
/// derivatives from being reported as a large relative error.
inline constexpr double kRelFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

/// Max relative error between the analytic gradient of `leaf` and central
/// differences of `loss_fn` (h = 1e-5). The analytic gradient must already be populated.
inline double max_fd_error(Tensor& leaf, const std::function<double()>& loss_fn, double h = 1e-5) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto data = leaf.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double saved = data[i];
        data[i] = saved + h;
        const double up = loss_fn();
        data[i] = saved - h;
        const double down = loss_fn();
        data[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

/// Smallest |input| over every relu in the graph of root.
inline double min_relu_margin(const Tensor& root) {
    double margin = INFINITY;
    for (const Tensor& t : crossalign::topological_order(root)) {
        if (t.op() != "relu") continue;
        for (double v : t.inputs().at(0).data()) margin = std::min(margin, std::abs(v));
    }
    return margin;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("crossalign-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
