#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <vector>

#include "lowshot/common.hpp"

namespace lowshot {

// Dense row-major array. Storage is shared between copies: a Tensor behaves
// like a cheap handle, clone() gives an independent buffer. Graph leaves wrap
// parameter tensors without copying the (potentially large) data.
template <class T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> store;

    Tensor() : store(std::make_shared<std::vector<T>>()) {}

    Tensor(Shape s, std::vector<T> values)
        : shape(std::move(s)), store(std::make_shared<std::vector<T>>(std::move(values))) {
        if (shape_numel(shape) != static_cast<std::int64_t>(store->size()))
            throw ShapeError("tensor data length " + std::to_string(store->size()) +
                             " does not match shape " + shape_str(shape));
        for (auto e : shape)
            if (e <= 0) throw ShapeError("nonpositive extent in " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        const auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)));
    }

    static Tensor full(Shape s, T v) {
        const auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), v));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(store->size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    T* data() { return store->data(); }
    const T* data() const { return store->data(); }

    T& operator[](std::int64_t i) { return (*store)[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return (*store)[static_cast<std::size_t>(i)]; }

    Tensor clone() const {
        Tensor out;
        out.shape = shape;
        out.store = std::make_shared<std::vector<T>>(*store);
        return out;
    }

    // Shares storage; numel must be preserved.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s));
        Tensor out;
        out.shape = std::move(s);
        out.store = store;
        return out;
    }

    bool all_finite() const {
        for (const T& v : *store)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> v(store->size());
        for (std::size_t i = 0; i < store->size(); ++i) v[i] = static_cast<U>((*store)[i]);
        return Tensor<U>(shape, std::move(v));
    }
};

template <class T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape == b.shape;
}

template <class T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) return false;
    return std::equal(a.store->begin(), a.store->end(), b.store->begin(),
                      [](T x, T y) { return std::memcmp(&x, &y, sizeof(T)) == 0; });
}

}  // namespace lowshot
