#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lowshot/operators.hpp"
#include "lowshot/pretrain.hpp"

namespace lowshot {

struct InversionConfig {
    std::int64_t stage1_iterations = 1250;
    double stage1_lr = 5e-2;
    std::int64_t stage2_iterations = 350;
    double stage2_lr = 1e-4;
    int restarts = 1;
    std::uint64_t seed = 0;
};

inline void validate(const InversionConfig& c) {
    if (c.stage1_iterations < 0 || c.stage2_iterations < 0)
        throw ConfigError("iteration counts must be nonnegative");
    if (!(c.stage1_lr > 0) || !(c.stage2_lr > 0)) throw ConfigError("learning rates must be positive");
    if (c.restarts < 1) throw ConfigError("restarts must be >= 1");
}

template <class T>
struct StageReport {
    std::vector<T> loss_history;  // objective before each step, then the final evaluation
    T final_loss = 0;             // objective of the iterate this stage returned
};

template <class T>
struct InversionResult {
    Tensor<T> z0;
    ParamSet<T> theta0;
    Tensor<T> reconstruction;   // forward(z0, theta0), range [-1,1]
    T measurement_loss = 0;     // at (z0, theta0)
    StageReport<T> stage1, stage2;
};

// Thrown when stage-2 refinement hits a non-finite value; the latent-only
// solution is still usable and rides along.
template <class T>
class RefineError : public NumericError {
public:
    RefineError(const std::string& msg, InversionResult<T> stage1_result)
        : NumericError(msg), fallback(std::move(stage1_result)) {}
    InversionResult<T> fallback;
};

// Images are measured on the [0,1] scale; decoder output lives in [-1,1], so
// the objective remaps before applying the operator:  ½‖A·u(G) − y‖².
template <class T>
NodePtr<T> measurement_loss_node(const MeasureOp<T>& op, const NodePtr<T>& gen, const Tensor<T>& y) {
    NodePtr<T> pred = op.apply(affine(gen, static_cast<T>(0.5), static_cast<T>(0.5)));
    if (pred->value.shape != y.shape)
        throw ShapeError("measurement vector " + shape_str(y.shape) + " vs operator output " +
                         shape_str(pred->value.shape));
    return affine(sum(square(sub(pred, constant(y)))), static_cast<T>(0.5), T(0));
}

template <class T>
T measurement_loss_value(const MeasureOp<T>& op, const DecoderDesc& desc, const ParamSet<T>& params,
                         const Tensor<T>& z, const Tensor<T>& y) {
    auto leaves = make_param_leaves(params, false);
    auto gen = decoder_forward<T>(desc, leaves, leaf(z, false));
    return scalar_value(measurement_loss_node(op, gen, y));
}

// Stage 1: frozen weights, Adam over the latent alone. Each restart draws its
// own starting point from the latent fit; the restart with the lowest final
// objective wins.
template <class T>
std::pair<Tensor<T>, StageReport<T>> solve_latent(const Tensor<T>& y, const MeasureOp<T>& op,
                                                  const DecoderDesc& desc, const ParamSet<T>& theta_hat,
                                                  const LatentFit<T>& fit, const InversionConfig& cfg) {
    validate(cfg);
    if (fit.mean.shape != Shape{desc.latent_dim})
        throw ShapeError("latent fit dimension " + shape_str(fit.mean.shape) + " vs decoder latent " +
                         std::to_string(desc.latent_dim));

    Tensor<T> best_z;
    StageReport<T> best_report;
    T best = std::numeric_limits<T>::infinity();

    for (int r = 0; r < cfg.restarts; ++r) {
        Tensor<T> z = sample_latent(fit, derive_seed(cfg.seed, "restart:" + std::to_string(r)));
        StageReport<T> report;
        report.loss_history.reserve(static_cast<std::size_t>(cfg.stage1_iterations) + 1);
        Adam<T> opt(AdamConfig<T>{static_cast<T>(cfg.stage1_lr)});
        Tensor<T>* slot = &z;

        for (std::int64_t it = 0; it < cfg.stage1_iterations; ++it) {
            try {
                auto theta_leaves = make_param_leaves(theta_hat, false);
                auto z_leaf = leaf(z, true);
                auto gen = decoder_forward<T>(desc, theta_leaves, z_leaf);
                report.loss_history.push_back(backward(measurement_loss_node(op, gen, y)));
                const std::vector<T>* g = &z_leaf->grad_buf();
                opt.step(std::span<Tensor<T>* const>(&slot, 1),
                         std::span<const std::vector<T>* const>(&g, 1));
            } catch (const NumericError& e) {
                throw NumericError(error_detail(e) + " (latent search, restart " +
                                   std::to_string(r) + ", iteration " + std::to_string(it) + ")");
            }
        }
        report.final_loss = measurement_loss_value(op, desc, theta_hat, z, y);
        report.loss_history.push_back(report.final_loss);
        if (report.final_loss < best) {
            best = report.final_loss;
            best_z = z;
            best_report = std::move(report);
        }
    }
    return {best_z, best_report};
}

// Stage 2: joint refinement of weights and latent. Returns the best iterate
// by measurement loss, the starting point included, so the result is never
// worse than stage 1.
template <class T>
InversionResult<T> refine_joint(const Tensor<T>& y, const MeasureOp<T>& op, const DecoderDesc& desc,
                                const ParamSet<T>& theta_hat, const Tensor<T>& z_hat,
                                const InversionConfig& cfg, StageReport<T> stage1_report = {}) {
    validate(cfg);

    auto finish = [&](Tensor<T> z, ParamSet<T> theta, T loss, StageReport<T> s2) {
        InversionResult<T> out;
        out.z0 = std::move(z);
        out.theta0 = std::move(theta);
        out.measurement_loss = loss;
        out.stage1 = std::move(stage1_report);
        out.stage2 = std::move(s2);
        out.reconstruction = decoder_eval(desc, out.theta0, out.z0);
        return out;
    };

    if (cfg.stage2_iterations == 0) {
        const T loss = measurement_loss_value(op, desc, theta_hat, z_hat, y);
        StageReport<T> s2;
        s2.final_loss = loss;
        s2.loss_history.push_back(loss);
        return finish(z_hat.clone(), theta_hat.clone(), loss, std::move(s2));
    }

    Tensor<T> z = z_hat.clone();
    ParamSet<T> theta = theta_hat.clone();

    std::vector<Tensor<T>*> slots;
    for (std::size_t i = 0; i < theta.size(); ++i) slots.push_back(&theta.value(i));
    slots.push_back(&z);
    std::vector<const std::vector<T>*> grads(slots.size());
    Adam<T> opt(AdamConfig<T>{static_cast<T>(cfg.stage2_lr)});

    StageReport<T> s2;
    s2.loss_history.reserve(static_cast<std::size_t>(cfg.stage2_iterations) + 1);
    T best = std::numeric_limits<T>::infinity();
    Tensor<T> best_z;
    ParamSet<T> best_theta;

    for (std::int64_t it = 0; it < cfg.stage2_iterations; ++it) {
        try {
            auto theta_leaves = make_param_leaves(theta, true);
            auto z_leaf = leaf(z, true);
            auto gen = decoder_forward<T>(desc, theta_leaves, z_leaf);
            const T loss = backward(measurement_loss_node(op, gen, y));
            s2.loss_history.push_back(loss);
            if (loss < best) {
                best = loss;
                best_z = z.clone();
                best_theta = theta.clone();
            }
            std::size_t k = 0;
            for (const auto& l : theta_leaves) grads[k++] = &l->grad_buf();
            grads[k] = &z_leaf->grad_buf();
            opt.step(std::span<Tensor<T>* const>(slots), std::span<const std::vector<T>* const>(grads));
        } catch (const NumericError& e) {
            const T loss = measurement_loss_value(op, desc, theta_hat, z_hat, y);
            StageReport<T> fs2;
            fs2.final_loss = loss;
            auto fb = finish(z_hat.clone(), theta_hat.clone(), loss, std::move(fs2));
            throw RefineError<T>(error_detail(e) + " (joint refinement, iteration " +
                                     std::to_string(it) + ")",
                                 std::move(fb));
        }
    }
    const T last = measurement_loss_value(op, desc, theta, z, y);
    s2.loss_history.push_back(last);
    if (last < best) {
        best = last;
        best_z = std::move(z);
        best_theta = std::move(theta);
    }
    s2.final_loss = best;
    return finish(std::move(best_z), std::move(best_theta), best, std::move(s2));
}

// Full two-stage solve from a trained model.
template <class T>
InversionResult<T> invert(const Tensor<T>& y, const MeasureOp<T>& op, const Model<T>& model,
                          const InversionConfig& cfg) {
    const LatentFit<T> fit = fit_latent_gaussian<T>(model.latents);
    auto [z_hat, report] = solve_latent(y, op, model.desc, model.params, fit, cfg);
    return refine_joint(y, op, model.desc, model.params, z_hat, cfg, std::move(report));
}

// Iteration budget for the untrained baseline, by compression ratio.
inline std::int64_t untrained_iterations(double ratio) {
    if (ratio <= 0.025) return 350;
    if (ratio <= 0.5) return 500;
    return 1000;
}

struct UntrainedConfig {
    double lr = 1e-3;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::int64_t iterations = 0;  // 0: pick from the compression-ratio schedule
};

// Baseline: fresh random weights, a fixed random latent, RMSProp over the
// weights alone.
template <class T>
InversionResult<T> solve_untrained(const Tensor<T>& y, const MeasureOp<T>& op, const DecoderDesc& desc,
                                   double compression_ratio, const UntrainedConfig& cfg) {
    validate(desc);
    Rng theta_rng(derive_seed(cfg.seed, "theta"));
    Rng z_rng(derive_seed(cfg.seed, "latent"));

    ParamSet<T> theta = init_params<T>(desc, theta_rng);
    Tensor<T> z = Tensor<T>::zeros({desc.latent_dim});
    for (std::int64_t j = 0; j < z.numel(); ++j) z[j] = static_cast<T>(z_rng.normal());

    // Colorization (luma) and identity get the largest budget regardless of m/n.
    const std::int64_t scheduled = op.kind() == MeasureOp<T>::Kind::gaussian
                                       ? untrained_iterations(compression_ratio)
                                       : 1000;
    const std::int64_t iters = cfg.iterations > 0 ? cfg.iterations : scheduled;

    std::vector<Tensor<T>*> slots;
    for (std::size_t i = 0; i < theta.size(); ++i) slots.push_back(&theta.value(i));
    std::vector<const std::vector<T>*> grads(slots.size());
    RmsProp<T> opt(RmsPropConfig<T>{static_cast<T>(cfg.lr), static_cast<T>(0.99),
                                    static_cast<T>(1e-8), static_cast<T>(cfg.momentum)});

    StageReport<T> report;
    report.loss_history.reserve(static_cast<std::size_t>(iters) + 1);
    for (std::int64_t it = 0; it < iters; ++it) {
        try {
            auto theta_leaves = make_param_leaves(theta, true);
            auto gen = decoder_forward<T>(desc, theta_leaves, leaf(z, false));
            report.loss_history.push_back(backward(measurement_loss_node(op, gen, y)));
            std::size_t k = 0;
            for (const auto& l : theta_leaves) grads[k++] = &l->grad_buf();
            opt.step(std::span<Tensor<T>* const>(slots), std::span<const std::vector<T>* const>(grads));
        } catch (const NumericError& e) {
            throw NumericError(error_detail(e) + " (baseline fit, iteration " +
                               std::to_string(it) + ")");
        }
    }
    report.final_loss = measurement_loss_value(op, desc, theta, z, y);
    report.loss_history.push_back(report.final_loss);

    InversionResult<T> out;
    out.z0 = std::move(z);
    out.theta0 = std::move(theta);
    out.measurement_loss = report.final_loss;
    out.stage1 = std::move(report);
    out.stage2.final_loss = out.measurement_loss;
    out.reconstruction = decoder_eval(desc, out.theta0, out.z0);
    return out;
}

}  // namespace lowshot
