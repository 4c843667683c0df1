#include "lowshot/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "lowshot/invert.hpp"
#include "lowshot/losses.hpp"
#include "lowshot/operators.hpp"

namespace lowshot {

namespace {

using D = double;

// One objective instance: problem data fixed, evaluated at a flat (θ, z...)
// vector. latents = number of latent codes appended after the weights.
struct Objective {
    std::string name;
    std::size_t latents = 1;
    std::function<NodePtr<D>(std::span<const NodePtr<D>>, std::span<const NodePtr<D>>)> build;
};

struct FlatPoint {
    ParamSet<D> params;
    std::vector<Tensor<D>> zs;
    std::int64_t dim = 0;

    std::vector<D> flatten() const {
        std::vector<D> out;
        out.reserve(static_cast<std::size_t>(dim));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& t = params.value(i);
            out.insert(out.end(), t.data(), t.data() + t.numel());
        }
        for (const auto& z : zs) out.insert(out.end(), z.data(), z.data() + z.numel());
        return out;
    }

    void assign(const std::vector<D>& flat) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& t = params.value(i);
            for (std::int64_t j = 0; j < t.numel(); ++j) t[j] = flat[k++];
        }
        for (auto& z : zs)
            for (std::int64_t j = 0; j < z.numel(); ++j) z[j] = flat[k++];
    }
};

Tensor<D> random_image(const DecoderDesc& d, Rng& rng) {
    Tensor<D> t = Tensor<D>::zeros({d.out_channels, d.resolution, d.resolution});
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
    validate(cfg.desc);
    if (cfg.points < 1 || cfg.directions < 0 || cfg.sampled_coords < 0)
        throw ConfigError("gradient check counts out of range");
    if (!(cfg.step > 0) || !(cfg.tol > 0)) throw ConfigError("gradient check step/tol out of range");
    if (cfg.shots < 2) throw ConfigError("set-level objectives need at least two shots");

    const DecoderDesc& desc = cfg.desc;
    const std::int64_t n = desc.out_channels * desc.resolution * desc.resolution;

    // fixed problem data
    Rng data_rng(derive_seed(cfg.seed, "data"));
    std::vector<Tensor<D>> shots;
    for (int i = 0; i < cfg.shots; ++i) shots.push_back(random_image(desc, data_rng));
    const D alpha = median_bandwidth<D>(shots);

    const std::int64_t m_cs = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                            std::llround(cfg.cs_ratio * double(n))));
    const MeasureOp<D> cs_op =
        MeasureOp<D>::gaussian(m_cs, n, derive_seed(cfg.seed, "op"));
    const MeasureOp<D> color_op = MeasureOp<D>::luma(desc.resolution, desc.resolution);
    const Tensor<D> truth = random_image(desc, data_rng);
    Tensor<D> unit_truth = unit_range(truth);
    const Tensor<D> y_cs = cs_op.apply(unit_truth);
    const Tensor<D> y_color = color_op.apply(unit_truth);

    const std::size_t s = static_cast<std::size_t>(cfg.shots);
    std::vector<Objective> objectives;
    objectives.push_back({"l2", s,
                          [&](std::span<const NodePtr<D>> theta, std::span<const NodePtr<D>> zs) {
                              std::vector<NodePtr<D>> gen;
                              for (const auto& z : zs) gen.push_back(decoder_forward<D>(desc, theta, z));
                              return l2_set_loss<D>(gen, shots);
                          }});
    objectives.push_back({"mmd", s,
                          [&](std::span<const NodePtr<D>> theta, std::span<const NodePtr<D>> zs) {
                              std::vector<NodePtr<D>> gen;
                              for (const auto& z : zs) gen.push_back(decoder_forward<D>(desc, theta, z));
                              return mmd_set_loss<D>(gen, shots, alpha);
                          }});
    objectives.push_back({"cs", 1,
                          [&](std::span<const NodePtr<D>> theta, std::span<const NodePtr<D>> zs) {
                              return measurement_loss_node(cs_op, decoder_forward<D>(desc, theta, zs[0]),
                                                           y_cs);
                          }});
    objectives.push_back({"colorization", 1,
                          [&](std::span<const NodePtr<D>> theta, std::span<const NodePtr<D>> zs) {
                              return measurement_loss_node(color_op,
                                                           decoder_forward<D>(desc, theta, zs[0]), y_color);
                          }});

    GradCheckReport report;
    report.pass = true;

    for (const auto& obj : objectives) {
        for (int p = 0; p < cfg.points; ++p) {
            Rng point_rng(derive_seed(cfg.seed, obj.name + ":point:" + std::to_string(p)));
            FlatPoint pt;
            pt.params = init_params<D>(desc, point_rng);
            for (std::size_t i = 0; i < obj.latents; ++i) {
                Tensor<D> z = Tensor<D>::zeros({desc.latent_dim});
                for (std::int64_t j = 0; j < z.numel(); ++j) z[j] = point_rng.normal();
                pt.zs.push_back(std::move(z));
            }
            pt.dim = pt.params.total_numel() +
                     static_cast<std::int64_t>(obj.latents) * desc.latent_dim;

            auto value_at = [&](const std::vector<D>& flat) {
                pt.assign(flat);
                auto theta = make_param_leaves(pt.params, false);
                std::vector<NodePtr<D>> zs;
                for (const auto& z : pt.zs) zs.push_back(leaf(z, false));
                return scalar_value(obj.build(theta, zs));
            };

            const std::vector<D> x0 = pt.flatten();

            // analytic gradient at x0
            std::vector<D> grad(static_cast<std::size_t>(pt.dim), 0.0);
            {
                pt.assign(x0);
                auto theta = make_param_leaves(pt.params, true);
                std::vector<NodePtr<D>> zs;
                for (const auto& z : pt.zs) zs.push_back(leaf(z, true));
                backward(obj.build(theta, zs));
                std::size_t k = 0;
                for (const auto& l : theta) {
                    const auto& g = l->grad_buf();
                    std::copy(g.begin(), g.end(), grad.begin() + k);
                    k += g.size();
                }
                for (const auto& l : zs) {
                    const auto& g = l->grad_buf();
                    std::copy(g.begin(), g.end(), grad.begin() + k);
                    k += g.size();
                }
            }

            D max_rel = 0.0;

            // Central difference with step refinement. A relu crossing inside
            // the sampled interval invalidates the quotient; shrinking the step
            // below the crossing distance restores it, while a wrong gradient
            // stays wrong at every step. Roundoff in the accumulated objective
            // puts a floor on the resolvable difference, so agreement within
            // that floor counts as exact.
            auto probe = [&](auto&& eval, D an) {
                D hh = cfg.step;
                for (int attempt = 0;; ++attempt) {
                    const auto [fp, fm] = eval(hh);
                    const D fd = (fp - fm) / (2 * hh);
                    const D noise = 256 * std::numeric_limits<D>::epsilon() *
                                    std::max(std::abs(fp), std::abs(fm)) / hh;
                    const D err = std::abs(fd - an);
                    const D rel = err <= std::max(noise, D(1e-10))
                                      ? 0.0
                                      : err / std::max({std::abs(fd), std::abs(an), D(1e-7)});
                    if (rel <= cfg.tol || attempt >= 6) return rel;
                    hh *= 0.25;
                }
            };

            // random unit directions across the full (θ, z) vector
            std::vector<D> x(x0);
            for (int d = 0; d < cfg.directions; ++d) {
                std::vector<D> dir(static_cast<std::size_t>(pt.dim));
                D norm = 0.0;
                for (auto& v : dir) {
                    v = point_rng.normal();
                    norm += v * v;
                }
                norm = std::sqrt(norm);
                for (auto& v : dir) v /= norm;
                D an = 0.0;
                for (std::size_t i = 0; i < dir.size(); ++i) an += grad[i] * dir[i];
                max_rel = std::max(max_rel, probe(
                                                [&](D hh) {
                                                    for (std::size_t i = 0; i < dir.size(); ++i)
                                                        x[i] = x0[i] + hh * dir[i];
                                                    const D fp = value_at(x);
                                                    for (std::size_t i = 0; i < dir.size(); ++i)
                                                        x[i] = x0[i] - hh * dir[i];
                                                    const D fm = value_at(x);
                                                    return std::pair<D, D>{fp, fm};
                                                },
                                                an));
                std::copy(x0.begin(), x0.end(), x.begin());
            }

            // every latent coordinate, plus sampled weight coordinates
            std::vector<std::int64_t> coords;
            const std::int64_t theta_dim = pt.params.total_numel();
            for (std::int64_t i = theta_dim; i < pt.dim; ++i) coords.push_back(i);
            for (int i = 0; i < cfg.sampled_coords; ++i)
                coords.push_back(static_cast<std::int64_t>(point_rng.next_u64() %
                                                           static_cast<std::uint64_t>(theta_dim)));
            for (std::int64_t c : coords) {
                const auto ci = static_cast<std::size_t>(c);
                max_rel = std::max(max_rel, probe(
                                                [&](D hh) {
                                                    x[ci] = x0[ci] + hh;
                                                    const D fp = value_at(x);
                                                    x[ci] = x0[ci] - hh;
                                                    const D fm = value_at(x);
                                                    x[ci] = x0[ci];
                                                    return std::pair<D, D>{fp, fm};
                                                },
                                                grad[ci]));
            }

            GradCheckCase gc;
            gc.objective = obj.name;
            gc.point = p;
            gc.max_rel_err = max_rel;
            gc.pass = max_rel <= cfg.tol;
            report.max_rel_err = std::max(report.max_rel_err, max_rel);
            report.pass = report.pass && gc.pass;
            report.cases.push_back(std::move(gc));
        }
    }
    return report;
}

}  // namespace lowshot
