#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "lowshot/graph.hpp"
#include "lowshot/rng.hpp"

namespace lowshot {

// Forward measurement operators. All of them are linear maps over the image
// as given; the pipeline measures images on the [0,1] scale, so callers remap
// decoder output (range [-1,1]) before applying. Plain-tensor application
// routes through the graph builder so there is exactly one code path.
template <class T>
class MeasureOp {
public:
    enum class Kind { gaussian, luma, identity };

    static MeasureOp gaussian(std::int64_t m, std::int64_t n, std::uint64_t seed) {
        if (m < 1 || n < 1) throw ConfigError("gaussian operator needs positive dimensions");
        MeasureOp op;
        op.kind_ = Kind::gaussian;
        op.m_ = m;
        op.n_ = n;
        op.seed_ = seed;
        op.matrix_ = Tensor<T>::zeros({m, n});
        Rng rng(seed);
        for (std::int64_t i = 0; i < op.matrix_.numel(); ++i)
            op.matrix_[i] = static_cast<T>(rng.normal());
        return op;
    }

    static MeasureOp luma(std::int64_t h, std::int64_t w) {
        if (h < 1 || w < 1) throw ConfigError("luma operator needs positive dimensions");
        MeasureOp op;
        op.kind_ = Kind::luma;
        op.h_ = h;
        op.w_ = w;
        op.m_ = h * w;
        op.n_ = 3 * h * w;
        return op;
    }

    static MeasureOp identity(std::int64_t n) {
        if (n < 1) throw ConfigError("identity operator needs positive dimension");
        MeasureOp op;
        op.kind_ = Kind::identity;
        op.m_ = n;
        op.n_ = n;
        return op;
    }

    NodePtr<T> apply(const NodePtr<T>& x) const {
        switch (kind_) {
            case Kind::gaussian: {
                if (x->value.numel() != n_)
                    throw ShapeError("gaussian operator expects " + std::to_string(n_) +
                                     " elements, got " + shape_str(x->value.shape));
                return matvec(matrix_, reshape(x, Shape{n_}));
            }
            case Kind::luma: {
                if (x->value.shape != Shape{3, h_, w_})
                    throw ShapeError("luma operator expects [3," + std::to_string(h_) + "," +
                                     std::to_string(w_) + "], got " + shape_str(x->value.shape));
                Tensor<T> coeff(Shape{3}, {static_cast<T>(0.299), static_cast<T>(0.587),
                                           static_cast<T>(0.114)});
                return channel_weighted_sum(x, coeff);
            }
            case Kind::identity: {
                if (x->value.numel() != n_)
                    throw ShapeError("identity operator expects " + std::to_string(n_) +
                                     " elements, got " + shape_str(x->value.shape));
                return x;
            }
        }
        throw ConfigError("unknown operator variant");
    }

    Tensor<T> apply(const Tensor<T>& x) const { return apply(constant(x))->value; }

    Kind kind() const { return kind_; }
    std::int64_t m() const { return m_; }
    std::int64_t n() const { return n_; }
    std::int64_t height() const { return h_; }  // luma only
    std::int64_t width() const { return w_; }
    double ratio() const { return static_cast<double>(m_) / static_cast<double>(n_); }
    std::uint64_t seed() const { return seed_; }
    const Tensor<T>& matrix() const {
        if (kind_ != Kind::gaussian) throw ConfigError("operator has no matrix");
        return matrix_;
    }

    std::string kind_name() const {
        switch (kind_) {
            case Kind::gaussian: return "gaussian";
            case Kind::luma: return "luma";
            case Kind::identity: return "identity";
        }
        return "?";
    }

private:
    MeasureOp() = default;
    Kind kind_ = Kind::identity;
    std::int64_t m_ = 0, n_ = 0;
    std::int64_t h_ = 0, w_ = 0;
    std::uint64_t seed_ = 0;
    Tensor<T> matrix_;
};

template <class T>
struct Measurement {
    Tensor<T> values;
    double noise_std = 0.0;
    std::uint64_t noise_seed = 0;
};

// Seeded additive Gaussian noise; zero std hands back the input bits.
template <class T>
Measurement<T> add_noise(const Tensor<T>& y, double noise_std, std::uint64_t seed) {
    if (noise_std < 0) throw ConfigError("noise std must be nonnegative");
    Measurement<T> out;
    out.noise_std = noise_std;
    out.noise_seed = seed;
    if (noise_std == 0) {
        out.values = y.clone();
        return out;
    }
    out.values = Tensor<T>::zeros(y.shape);
    Rng rng(seed);
    for (std::int64_t i = 0; i < y.numel(); ++i)
        out.values[i] = y[i] + static_cast<T>(noise_std * rng.normal());
    return out;
}

}  // namespace lowshot
