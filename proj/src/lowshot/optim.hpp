#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lowshot/tensor.hpp"

namespace lowshot {

// Optimizers work on a fixed list of slots. The caller passes the same
// parameter tensors and matching gradient buffers every step; slot state is
// sized on first use and can be exported/restored for checkpointing.

template <class T>
struct AdamConfig {
    T lr = static_cast<T>(1e-3);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
};

template <class T>
class Adam {
public:
    explicit Adam(AdamConfig<T> cfg) : cfg_(cfg) {}

    void step(std::span<Tensor<T>* const> params, std::span<const std::vector<T>* const> grads) {
        if (params.size() != grads.size()) throw ConfigError("optimizer slot count mismatch");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t s = 0; s < params.size(); ++s) {
                m_[s].assign(static_cast<std::size_t>(params[s]->numel()), T(0));
                v_[s].assign(static_cast<std::size_t>(params[s]->numel()), T(0));
            }
        }
        if (m_.size() != params.size()) throw ConfigError("optimizer slot count changed");
        ++t_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
        for (std::size_t s = 0; s < params.size(); ++s) {
            Tensor<T>& p = *params[s];
            const std::vector<T>& g = *grads[s];
            if (g.size() != m_[s].size()) throw ConfigError("optimizer gradient size mismatch");
            for (std::size_t i = 0; i < g.size(); ++i) {
                m_[s][i] = cfg_.beta1 * m_[s][i] + (T(1) - cfg_.beta1) * g[i];
                v_[s][i] = cfg_.beta2 * v_[s][i] + (T(1) - cfg_.beta2) * g[i] * g[i];
                const T mhat = m_[s][i] / bc1;
                const T vhat = v_[s][i] / bc2;
                p[static_cast<std::int64_t>(i)] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    std::int64_t steps() const { return t_; }
    std::size_t slot_count() const { return m_.size(); }
    const std::vector<T>& slot_m(std::size_t s) const { return m_[s]; }
    const std::vector<T>& slot_v(std::size_t s) const { return v_[s]; }

    void restore(std::int64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v) {
        if (m.size() != v.size()) throw ConfigError("optimizer state slot mismatch");
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

    const AdamConfig<T>& config() const { return cfg_; }

private:
    AdamConfig<T> cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

template <class T>
struct RmsPropConfig {
    T lr = static_cast<T>(1e-3);
    T rho = static_cast<T>(0.99);
    T eps = static_cast<T>(1e-8);
    T momentum = static_cast<T>(0.9);
};

template <class T>
class RmsProp {
public:
    explicit RmsProp(RmsPropConfig<T> cfg) : cfg_(cfg) {}

    const RmsPropConfig<T>& config() const { return cfg_; }

    void step(std::span<Tensor<T>* const> params, std::span<const std::vector<T>* const> grads) {
        if (params.size() != grads.size()) throw ConfigError("optimizer slot count mismatch");
        if (sq_.empty()) {
            sq_.resize(params.size());
            buf_.resize(params.size());
            for (std::size_t s = 0; s < params.size(); ++s) {
                sq_[s].assign(static_cast<std::size_t>(params[s]->numel()), T(0));
                buf_[s].assign(static_cast<std::size_t>(params[s]->numel()), T(0));
            }
        }
        if (sq_.size() != params.size()) throw ConfigError("optimizer slot count changed");
        ++t_;
        for (std::size_t s = 0; s < params.size(); ++s) {
            Tensor<T>& p = *params[s];
            const std::vector<T>& g = *grads[s];
            if (g.size() != sq_[s].size()) throw ConfigError("optimizer gradient size mismatch");
            for (std::size_t i = 0; i < g.size(); ++i) {
                sq_[s][i] = cfg_.rho * sq_[s][i] + (T(1) - cfg_.rho) * g[i] * g[i];
                buf_[s][i] = cfg_.momentum * buf_[s][i] + g[i] / (std::sqrt(sq_[s][i]) + cfg_.eps);
                p[static_cast<std::int64_t>(i)] -= cfg_.lr * buf_[s][i];
            }
        }
    }

    std::int64_t steps() const { return t_; }

private:
    RmsPropConfig<T> cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<T>> sq_, buf_;
};

}  // namespace lowshot
