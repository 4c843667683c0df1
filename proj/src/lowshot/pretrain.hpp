#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lowshot/checkpoint.hpp"
#include "lowshot/losses.hpp"
#include "lowshot/optim.hpp"

namespace lowshot {

enum class LossKind { l2, mmd };

inline const char* loss_kind_name(LossKind k) { return k == LossKind::l2 ? "l2" : "mmd"; }

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "l2") return LossKind::l2;
    if (s == "mmd") return LossKind::mmd;
    throw ConfigError("unknown loss kind: " + s);
}

struct PretrainConfig {
    LossKind loss_kind = LossKind::l2;
    std::int64_t iterations = 50000;
    double lr = 1e-3;
    double mmd_alpha = 0.0;  // 0: median heuristic over the shots
    MmdEstimator estimator = MmdEstimator::pairwise;
    std::uint64_t seed = 0;
};

template <class T>
struct PretrainResult {
    Model<T> model;  // trained weights + latent table
    std::vector<T> loss_history;
};

// Thrown when a non-finite value interrupts an optimization loop. Carries the
// most recent finite state so long runs are not lost.
template <class T>
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& msg, std::int64_t iter, Model<T> state)
        : NumericError(msg + " at iteration " + std::to_string(iter)),
          iteration(iter),
          last_good(std::move(state)) {}

    std::int64_t iteration;
    Model<T> last_good;
};

namespace detail {

template <class T>
bool model_state_finite(const ParamSet<T>& params, std::span<const Tensor<T>> latents) {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params.value(i).all_finite()) return false;
    for (const auto& z : latents)
        if (!z.all_finite()) return false;
    return true;
}

}  // namespace detail

// Joint optimization of decoder weights and one latent per shot, full batch,
// fixed iteration budget. Deterministic per (seed, config).
template <class T>
PretrainResult<T> pretrain(std::span<const Tensor<T>> shots, const DecoderDesc& desc,
                           const PretrainConfig& cfg) {
    validate(desc);
    if (shots.empty()) throw ConfigError("pretraining needs at least one shot");
    if (cfg.loss_kind == LossKind::mmd && shots.size() < 2)
        throw ConfigError("set-level loss needs at least two shots");
    if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(cfg.lr > 0)) throw ConfigError("learning rate must be positive");
    const Shape want{desc.out_channels, desc.resolution, desc.resolution};
    for (const auto& x : shots)
        if (x.shape != want)
            throw ShapeError("shot shape " + shape_str(x.shape) + " vs decoder output " +
                             shape_str(want));

    const std::size_t s = shots.size();
    Rng theta_rng(derive_seed(cfg.seed, "theta"));
    Rng z_rng(derive_seed(cfg.seed, "latent"));

    Model<T> model;
    model.desc = desc;
    model.params = init_params<T>(desc, theta_rng);
    for (std::size_t i = 0; i < s; ++i) {
        Tensor<T> z = Tensor<T>::zeros({desc.latent_dim});
        for (std::int64_t j = 0; j < z.numel(); ++j) z[j] = static_cast<T>(z_rng.normal());
        model.latents.push_back(std::move(z));
    }

    T alpha = static_cast<T>(cfg.mmd_alpha);
    if (cfg.loss_kind == LossKind::mmd && cfg.mmd_alpha == 0.0)
        alpha = median_bandwidth<T>(shots);

    Adam<T> opt(AdamConfig<T>{static_cast<T>(cfg.lr)});
    std::vector<Tensor<T>*> slots;
    for (std::size_t i = 0; i < model.params.size(); ++i) slots.push_back(&model.params.value(i));
    for (auto& z : model.latents) slots.push_back(&z);

    PretrainResult<T> out;
    out.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));
    std::vector<const std::vector<T>*> grads(slots.size());

    for (std::int64_t it = 0; it < cfg.iterations; ++it) {
        try {
            auto theta_leaves = make_param_leaves(model.params, true);
            std::vector<NodePtr<T>> z_leaves;
            std::vector<NodePtr<T>> gen;
            z_leaves.reserve(s);
            gen.reserve(s);
            for (std::size_t i = 0; i < s; ++i) {
                z_leaves.push_back(leaf(model.latents[i], true));
                gen.push_back(decoder_forward<T>(desc, theta_leaves, z_leaves[i]));
            }
            NodePtr<T> loss = cfg.loss_kind == LossKind::l2
                                  ? l2_set_loss<T>(gen, shots)
                                  : mmd_set_loss<T>(gen, shots, alpha, cfg.estimator);
            out.loss_history.push_back(backward(loss));

            std::size_t k = 0;
            for (const auto& l : theta_leaves) grads[k++] = &l->grad_buf();
            for (const auto& l : z_leaves) grads[k++] = &l->grad_buf();
            opt.step(std::span<Tensor<T>* const>(slots), std::span<const std::vector<T>* const>(grads));
        } catch (const NumericError& e) {
            if (detail::model_state_finite<T>(model.params, model.latents))
                throw TrainingError<T>(error_detail(e), it, model);
            throw;
        }
    }
    out.model = std::move(model);
    return out;
}

// Diagonal Gaussian over the latent table: per-dimension sample mean and
// sample standard deviation, floored so a degenerate table still spreads.
template <class T>
struct LatentFit {
    Tensor<T> mean;
    Tensor<T> std;  // after flooring
    T floor = static_cast<T>(0.1);
};

template <class T>
LatentFit<T> fit_latent_gaussian(std::span<const Tensor<T>> latents, T floor = static_cast<T>(0.1)) {
    if (latents.empty()) throw ConfigError("latent fit needs at least one code");
    const std::int64_t k = latents[0].numel();
    for (const auto& z : latents)
        if (z.numel() != k) throw ShapeError("latent codes differ in dimension");
    const std::size_t s = latents.size();

    LatentFit<T> fit;
    fit.floor = floor;
    fit.mean = Tensor<T>::zeros({k});
    fit.std = Tensor<T>::zeros({k});
    for (std::int64_t d = 0; d < k; ++d) {
        T m = 0;
        for (const auto& z : latents) m += z[d];
        m /= static_cast<T>(s);
        T v = 0;
        if (s > 1) {
            for (const auto& z : latents) {
                const T e = z[d] - m;
                v += e * e;
            }
            v /= static_cast<T>(s - 1);
        }
        fit.mean[d] = m;
        const T sd = std::sqrt(v);
        fit.std[d] = sd > floor ? sd : floor;
    }
    return fit;
}

template <class T>
Tensor<T> sample_latent(const LatentFit<T>& fit, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<T> z = Tensor<T>::zeros(fit.mean.shape);
    for (std::int64_t d = 0; d < z.numel(); ++d)
        z[d] = fit.mean[d] + fit.std[d] * static_cast<T>(rng.normal());
    return z;
}

}  // namespace lowshot
