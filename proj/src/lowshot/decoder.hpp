#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lowshot/params.hpp"
#include "lowshot/rng.hpp"

namespace lowshot {

// Transposed-convolution decoder, DCGAN shape: latent vector -> 4x4 seed
// block -> repeated x2 upsampling -> tanh image in [-1, 1]. No conv biases;
// every layer except the last is followed by batch norm and ReLU.
struct DecoderDesc {
    std::int64_t latent_dim = 128;
    std::int64_t resolution = 64;    // power of two, >= 16
    std::int64_t out_channels = 3;
    std::int64_t base_channels = 512;  // channels of the 4x4 seed block
    double bn_eps = 1e-5;
};

inline bool operator==(const DecoderDesc& a, const DecoderDesc& b) {
    return a.latent_dim == b.latent_dim && a.resolution == b.resolution &&
           a.out_channels == b.out_channels && a.base_channels == b.base_channels &&
           a.bn_eps == b.bn_eps;
}

struct DecoderLayer {
    std::int64_t cin = 0;
    std::int64_t cout = 0;
    int stride = 2;
    int padding = 1;
    bool has_bn = true;  // final layer: no bn, tanh instead of relu
};

inline int upsample_stages(const DecoderDesc& d) {
    int u = 0;
    std::int64_t r = 4;
    while (r < d.resolution) {
        r *= 2;
        ++u;
    }
    return u;
}

inline void validate(const DecoderDesc& d) {
    if (d.latent_dim < 1) throw ConfigError("decoder latent_dim must be positive");
    if (d.out_channels < 1) throw ConfigError("decoder out_channels must be positive");
    if (!(d.bn_eps > 0)) throw ConfigError("decoder bn_eps must be positive");
    if (d.resolution < 16 || (d.resolution & (d.resolution - 1)) != 0)
        throw ConfigError("decoder resolution must be a power of two >= 16, got " +
                          std::to_string(d.resolution));
    const int u = upsample_stages(d);
    const std::int64_t div = std::int64_t(1) << (u - 1);
    if (d.base_channels < div || d.base_channels % div != 0)
        throw ConfigError("decoder base_channels must be a multiple of " + std::to_string(div) +
                          " at resolution " + std::to_string(d.resolution));
}

// Layer 0 projects the latent to the seed block (stride 1, no padding); each
// later layer halves channels and doubles resolution; the last maps to image
// channels.
inline std::vector<DecoderLayer> layer_table(const DecoderDesc& d) {
    validate(d);
    const int u = upsample_stages(d);
    std::vector<DecoderLayer> layers;
    layers.push_back({d.latent_dim, d.base_channels, 1, 0, true});
    std::int64_t c = d.base_channels;
    for (int i = 1; i < u; ++i) {
        layers.push_back({c, c / 2, 2, 1, true});
        c /= 2;
    }
    layers.push_back({c, d.out_channels, 2, 1, false});
    return layers;
}

inline std::int64_t param_count(const DecoderDesc& d) {
    std::int64_t n = 0;
    for (const auto& l : layer_table(d)) {
        n += l.cin * l.cout * 16;
        if (l.has_bn) n += 2 * l.cout;
    }
    return n;
}

// conv{i}.weight [Cin, Cout, 4, 4], then bn{i}.gamma / bn{i}.beta where the
// layer has one. Weights N(0, 0.02^2); gamma N(1, 0.02^2); beta zero.
template <class T>
ParamSet<T> init_params(const DecoderDesc& d, Rng& rng) {
    ParamSet<T> out;
    const auto layers = layer_table(d);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        Tensor<T> w = Tensor<T>::zeros({l.cin, l.cout, 4, 4});
        for (std::int64_t j = 0; j < w.numel(); ++j)
            w[j] = static_cast<T>(rng.normal() * 0.02);
        out.add("conv" + std::to_string(i) + ".weight", std::move(w));
        if (l.has_bn) {
            Tensor<T> g = Tensor<T>::zeros({l.cout});
            for (std::int64_t j = 0; j < g.numel(); ++j)
                g[j] = static_cast<T>(1.0 + rng.normal() * 0.02);
            out.add("bn" + std::to_string(i) + ".gamma", std::move(g));
            out.add("bn" + std::to_string(i) + ".beta", Tensor<T>::zeros({l.cout}));
        }
    }
    return out;
}

// Builds the forward graph from a latent node and the parameter leaves in
// ParamSet order. Output node is [out_channels, R, R].
template <class T>
NodePtr<T> decoder_forward(const DecoderDesc& d, std::span<const NodePtr<T>> param_leaves,
                           const NodePtr<T>& z) {
    const auto layers = layer_table(d);
    if (z->value.shape != Shape{d.latent_dim})
        throw ShapeError("decoder latent must be [" + std::to_string(d.latent_dim) + "], got " +
                         shape_str(z->value.shape));
    std::size_t pi = 0;
    auto need = [&]() -> const NodePtr<T>& {
        if (pi >= param_leaves.size()) throw ConfigError("decoder given too few parameter leaves");
        return param_leaves[pi++];
    };

    NodePtr<T> h = reshape(z, Shape{d.latent_dim, 1, 1});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const NodePtr<T>& w = need();
        h = conv_transpose2d(h, w, l.stride, l.padding);
        if (l.has_bn) {
            const NodePtr<T>& gamma = need();
            const NodePtr<T>& beta = need();
            const Shape s = h->value.shape;  // [C,H,W]
            h = reshape(h, Shape{1, s[0], s[1], s[2]});
            h = batch_norm(h, gamma, beta, static_cast<T>(d.bn_eps));
            h = reshape(h, s);
            h = relu(h);
        } else {
            h = tanh_op(h);
        }
    }
    if (pi != param_leaves.size()) throw ConfigError("decoder given too many parameter leaves");
    return h;
}

// Forward pass without gradients; returns the image tensor.
template <class T>
Tensor<T> decoder_eval(const DecoderDesc& d, const ParamSet<T>& params, const Tensor<T>& z) {
    auto leaves = make_param_leaves(params, false);
    auto out = decoder_forward<T>(d, leaves, leaf(z, false));
    return out->value;
}

}  // namespace lowshot
