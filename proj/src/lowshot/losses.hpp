#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lowshot/graph.hpp"

namespace lowshot {

namespace detail {

template <class T>
NodePtr<T> add_scalars(std::vector<NodePtr<T>> terms) {
    if (terms.empty()) throw ConfigError("empty scalar sum");
    NodePtr<T> acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

}  // namespace detail

// mean_i ||gen_i - target_i||^2
template <class T>
NodePtr<T> l2_set_loss(std::span<const NodePtr<T>> gen, std::span<const Tensor<T>> targets) {
    if (gen.empty() || gen.size() != targets.size())
        throw ShapeError("set loss needs matching nonempty generated/target lists");
    std::vector<NodePtr<T>> terms;
    terms.reserve(gen.size());
    for (std::size_t i = 0; i < gen.size(); ++i)
        terms.push_back(sum(square(sub(gen[i], constant(targets[i])))));
    return affine(detail::add_scalars(std::move(terms)), T(1) / static_cast<T>(gen.size()), T(0));
}

// exp(-||a-b||^2 / alpha)
template <class T>
NodePtr<T> gaussian_kernel(const NodePtr<T>& a, const NodePtr<T>& b, T alpha) {
    if (!(alpha > T(0))) throw ConfigError("kernel bandwidth must be positive");
    return exp_op(affine(sum(square(sub(a, b))), T(-1) / alpha, T(0)));
}

template <class T>
T gaussian_kernel_value(const Tensor<T>& a, const Tensor<T>& b, T alpha) {
    if (!(alpha > T(0))) throw ConfigError("kernel bandwidth must be positive");
    if (a.shape != b.shape) throw ShapeError("kernel arguments differ in shape");
    T d = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const T e = a[i] - b[i];
        d += e * e;
    }
    return std::exp(-d / alpha);
}

// Median of pairwise squared distances between the shots; even pair counts
// average the two middle values. The usual default bandwidth.
template <class T>
T median_bandwidth(std::span<const Tensor<T>> shots) {
    if (shots.size() < 2) throw ConfigError("bandwidth heuristic needs at least two shots");
    std::vector<T> d2;
    d2.reserve(shots.size() * (shots.size() - 1) / 2);
    for (std::size_t i = 0; i < shots.size(); ++i) {
        for (std::size_t j = i + 1; j < shots.size(); ++j) {
            if (shots[i].shape != shots[j].shape) throw ShapeError("shots differ in shape");
            T d = 0;
            for (std::int64_t k = 0; k < shots[i].numel(); ++k) {
                const T e = shots[i][k] - shots[j][k];
                d += e * e;
            }
            d2.push_back(d);
        }
    }
    std::sort(d2.begin(), d2.end());
    const std::size_t n = d2.size();
    const T med = (n % 2) ? d2[n / 2] : (d2[n / 2 - 1] + d2[n / 2]) / T(2);
    if (!(med > T(0)))
        throw ConfigError("kernel bandwidth heuristic collapsed: shots are identical");
    return med;
}

enum class MmdEstimator { pairwise, unbiased };

inline MmdEstimator parse_mmd_estimator(const std::string& s) {
    if (s == "pairwise") return MmdEstimator::pairwise;
    if (s == "unbiased") return MmdEstimator::unbiased;
    throw ConfigError("unknown mmd estimator: " + s);
}

// Squared-MMD set loss between generated images and the shots.
//
// pairwise: every term is normalized by the number of unordered pairs
//   C = S(S-1)/2 and all three double sums skip i == j:
//     (1/C) sum_{i!=j} k(g_i,g_j) + (1/C) sum_{i!=j} k(x_i,x_j)
//       - (2/C) sum_{i!=j} k(g_i,x_j)
//   With g_i == x_i the three terms cancel exactly.
// unbiased: the standard U-statistic; the cross sum runs over all S^2 pairs
//   with 1/S^2 weight.
//
// The shot/shot sum has no gradient, so it enters as a precomputed constant.
template <class T>
NodePtr<T> mmd_set_loss(std::span<const NodePtr<T>> gen, std::span<const Tensor<T>> shots, T alpha,
                        MmdEstimator est = MmdEstimator::pairwise) {
    const std::size_t s = gen.size();
    if (s < 2) throw ConfigError("set-level discrepancy needs at least two entries per side");
    if (shots.size() != s)
        throw ShapeError("set loss needs equally many generated images and shots");
    const T ordered_pairs = static_cast<T>(s * (s - 1));

    T w_self, w_cross;
    if (est == MmdEstimator::pairwise) {
        const T c = ordered_pairs / T(2);
        w_self = T(1) / c;
        w_cross = T(-2) / c;
    } else {
        w_self = T(1) / ordered_pairs;
        w_cross = T(-2) / static_cast<T>(s * s);
    }

    // generated/generated, unordered pairs counted twice
    std::vector<NodePtr<T>> gg;
    gg.reserve(s * (s - 1) / 2);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j)
            gg.push_back(gaussian_kernel(gen[i], gen[j], alpha));
    NodePtr<T> loss = affine(detail::add_scalars(std::move(gg)), T(2) * w_self, T(0));

    // generated/shot
    std::vector<NodePtr<T>> gx;
    gx.reserve(s * s);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) {
            if (est == MmdEstimator::pairwise && i == j) continue;
            gx.push_back(gaussian_kernel(gen[i], constant(shots[j]), alpha));
        }
    loss = add(loss, affine(detail::add_scalars(std::move(gx)), w_cross, T(0)));

    // shot/shot, plain arithmetic
    T ss = 0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j)
            ss += gaussian_kernel_value(shots[i], shots[j], alpha);
    loss = add(loss, constant(Tensor<T>(Shape{}, {T(2) * w_self * ss})));
    return loss;
}

// ---- scalar image metrics, [0,1] data ----

template <class T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw ShapeError("mse " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double acc = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

// Peak signal-to-noise ratio for unit-range images, clamped at 100 dB so
// exact matches stay finite.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    const double mse = mean_squared_error(a, b);
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

// Map decoder output range [-1, 1] onto [0, 1].
template <class T>
Tensor<T> unit_range(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = static_cast<T>(0.5) * x[i] + static_cast<T>(0.5);
    return out;
}

}  // namespace lowshot
