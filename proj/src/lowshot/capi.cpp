#include "lowshot/lowshot.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "lowshot/config.hpp"
#include "lowshot/dataset.hpp"
#include "lowshot/invert.hpp"
#include "lowshot/losses.hpp"
#include "lowshot/plot.hpp"
#include "lowshot/pretrain.hpp"
#include "lowshot/sweep.hpp"
#include "lowshot/verify.hpp"

struct lowshot_dataset {
    lowshot::Dataset ds;
};
struct lowshot_model {
    lowshot::Model<float> model;
};
struct lowshot_operator {
    lowshot::MeasureOp<float> op;
};
struct lowshot_result {
    lowshot::InversionResult<float> res;
};

namespace {

thread_local std::string t_last_error;

// Bad pointer or buffer size at the boundary, as opposed to an error from the
// core; maps to LOWSHOT_ERR_INVALID_ARGUMENT.
struct InvalidArgument : std::runtime_error {
    using std::runtime_error::runtime_error;
};

lowshot_status fail(lowshot_status code, const std::string& msg) {
    t_last_error = msg;
    return code;
}

// Every entry point funnels through here so exceptions never cross the C
// boundary.
template <class F>
lowshot_status wrap(F&& f) noexcept {
    try {
        f();
        return LOWSHOT_OK;
    } catch (const InvalidArgument& e) {
        return fail(LOWSHOT_ERR_INVALID_ARGUMENT, e.what());
    } catch (const lowshot::ShapeError& e) {
        return fail(LOWSHOT_ERR_SHAPE, e.what());
    } catch (const lowshot::ConfigError& e) {
        return fail(LOWSHOT_ERR_CONFIG, e.what());
    } catch (const lowshot::NumericError& e) {
        return fail(LOWSHOT_ERR_NUMERIC, e.what());
    } catch (const lowshot::IncompatibleError& e) {
        return fail(LOWSHOT_ERR_INCOMPATIBLE, e.what());
    } catch (const lowshot::IoError& e) {
        return fail(LOWSHOT_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(LOWSHOT_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(LOWSHOT_ERR_INTERNAL, "unknown error");
    }
}

lowshot_status need(bool ok, const char* what) {
    if (ok) return LOWSHOT_OK;
    return fail(LOWSHOT_ERR_INVALID_ARGUMENT, std::string("invalid argument: ") + what);
}

char* alloc_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void copy_out(const std::string& s, char* buf, size_t buf_len) {
    if (buf_len < s.size() + 1)
        throw InvalidArgument("buffer too small, need " + std::to_string(s.size() + 1) + " bytes");
    std::memcpy(buf, s.c_str(), s.size() + 1);
}

lowshot::Tensor<float> tensor_from(const float* data, const lowshot::Shape& shape) {
    lowshot::Tensor<float> t = lowshot::Tensor<float>::zeros(shape);
    std::memcpy(t.data(), data, static_cast<std::size_t>(t.numel()) * sizeof(float));
    return t;
}

void tensor_to(const lowshot::Tensor<float>& t, float* out, size_t out_len) {
    const auto n = static_cast<std::size_t>(t.numel());
    if (out_len != n)
        throw InvalidArgument("buffer holds " + std::to_string(out_len) + " floats, need " +
                              std::to_string(n));
    std::memcpy(out, t.data(), n * sizeof(float));
}

const std::vector<lowshot::Tensor<float>>& split_of(const lowshot::Dataset& ds, int32_t which) {
    if (which == 0) return ds.shots;
    if (which == 1) return ds.test;
    throw lowshot::ConfigError("split selector must be 0 (shots) or 1 (test)");
}

const std::vector<lowshot::DatasetEntry>& entries_of(const lowshot::Dataset& ds, int32_t which) {
    if (which == 0) return ds.manifest.shots;
    if (which == 1) return ds.manifest.test;
    throw lowshot::ConfigError("split selector must be 0 (shots) or 1 (test)");
}

}  // namespace

extern "C" {

const char* lowshot_last_error(void) { return t_last_error.c_str(); }

void lowshot_string_free(char* s) { std::free(s); }

lowshot_status lowshot_dataset_open(const char* dir, int64_t resolution, int32_t shot_count,
                                    int32_t test_count, lowshot_dataset** out) {
    if (auto s = need(dir && out, "dir/out")) return s;
    return wrap([&] {
        auto ds = lowshot::load_dataset(dir, resolution, shot_count, test_count);
        *out = new lowshot_dataset{std::move(ds)};
    });
}

void lowshot_dataset_close(lowshot_dataset* ds) { delete ds; }

lowshot_status lowshot_dataset_counts(const lowshot_dataset* ds, int32_t* shots, int32_t* test) {
    if (auto s = need(ds != nullptr, "dataset")) return s;
    if (shots) *shots = static_cast<int32_t>(ds->ds.shots.size());
    if (test) *test = static_cast<int32_t>(ds->ds.test.size());
    return LOWSHOT_OK;
}

lowshot_status lowshot_dataset_image(const lowshot_dataset* ds, int32_t which, int32_t index,
                                     float* out, size_t out_len) {
    if (auto s = need(ds && out, "dataset/out")) return s;
    return wrap([&] {
        const auto& split = split_of(ds->ds, which);
        if (index < 0 || static_cast<std::size_t>(index) >= split.size())
            throw lowshot::ConfigError("image index " + std::to_string(index) + " out of range");
        tensor_to(split[static_cast<std::size_t>(index)], out, out_len);
    });
}

lowshot_status lowshot_dataset_image_id(const lowshot_dataset* ds, int32_t which, int32_t index,
                                        char* buf, size_t buf_len) {
    if (auto s = need(ds && buf, "dataset/buf")) return s;
    return wrap([&] {
        const auto& entries = entries_of(ds->ds, which);
        if (index < 0 || static_cast<std::size_t>(index) >= entries.size())
            throw lowshot::ConfigError("image index " + std::to_string(index) + " out of range");
        copy_out(entries[static_cast<std::size_t>(index)].digest, buf, buf_len);
    });
}

lowshot_status lowshot_image_load(const char* path, int64_t resolution, float* out,
                                  size_t out_len) {
    if (auto s = need(path && out, "path/out")) return s;
    return wrap([&] { tensor_to(lowshot::load_image(path, resolution), out, out_len); });
}

lowshot_status lowshot_image_save_png(const char* path, const float* chw, int64_t resolution) {
    if (auto s = need(path && chw, "path/chw")) return s;
    return wrap([&] {
        lowshot::save_image_png(path, tensor_from(chw, {3, resolution, resolution}));
    });
}

lowshot_status lowshot_psnr(const float* a, const float* b, size_t len, double* out) {
    if (auto s = need(a && b && out && len > 0, "a/b/out/len")) return s;
    return wrap([&] {
        const auto n = static_cast<std::int64_t>(len);
        *out = lowshot::psnr(lowshot::unit_range(tensor_from(a, {n})),
                             lowshot::unit_range(tensor_from(b, {n})));
    });
}

lowshot_status lowshot_file_digest(const char* path, char* buf, size_t buf_len) {
    if (auto s = need(path && buf, "path/buf")) return s;
    return wrap([&] { copy_out(lowshot::file_digest(path), buf, buf_len); });
}

lowshot_status lowshot_pretrain(const char* config_json, const float* shots, int32_t shot_count,
                                lowshot_model** out) {
    if (auto s = need(config_json && shots && out && shot_count > 0, "config/shots/out")) return s;
    return wrap([&] {
        const lowshot::RunConfig cfg = lowshot::parse_config_json(config_json);
        const lowshot::DecoderDesc desc = lowshot::config_desc(cfg);
        const std::int64_t per = 3 * cfg.resolution * cfg.resolution;
        std::vector<lowshot::Tensor<float>> set;
        set.reserve(static_cast<std::size_t>(shot_count));
        for (int32_t i = 0; i < shot_count; ++i)
            set.push_back(tensor_from(shots + static_cast<std::ptrdiff_t>(i) * per,
                                      {3, cfg.resolution, cfg.resolution}));
        lowshot::PretrainConfig pc;
        pc.loss_kind = lowshot::parse_loss_kind(cfg.losses.at(0));
        pc.iterations = cfg.pretrain_iterations;
        pc.lr = cfg.pretrain_lr;
        pc.mmd_alpha = cfg.mmd_alpha;
        pc.estimator = lowshot::parse_mmd_estimator(cfg.mmd_estimator);
        pc.seed = cfg.seed;
        auto result = lowshot::pretrain<float>(
            std::span<const lowshot::Tensor<float>>(set.data(), set.size()), desc, pc);
        *out = new lowshot_model{std::move(result.model)};
    });
}

lowshot_status lowshot_model_load(const char* path, lowshot_model** out) {
    if (auto s = need(path && out, "path/out")) return s;
    return wrap([&] { *out = new lowshot_model{lowshot::load_model<float>(path)}; });
}

lowshot_status lowshot_model_save(const lowshot_model* model, const char* path) {
    if (auto s = need(model && path, "model/path")) return s;
    return wrap([&] { lowshot::save_model(path, model->model); });
}

void lowshot_model_close(lowshot_model* model) { delete model; }

lowshot_status lowshot_model_info(const lowshot_model* model, char** json_out) {
    if (auto s = need(model && json_out, "model/json_out")) return s;
    return wrap([&] {
        const auto& m = model->model;
        nlohmann::json j;
        j["resolution"] = m.desc.resolution;
        j["latent_dim"] = m.desc.latent_dim;
        j["base_channels"] = m.desc.base_channels;
        j["out_channels"] = m.desc.out_channels;
        j["bn_eps"] = m.desc.bn_eps;
        j["latents"] = m.latents.size();
        j["param_tensors"] = m.params.size();
        j["param_count"] = m.params.total_numel();
        j["meta"] = m.meta;
        *json_out = alloc_string(j.dump(2));
    });
}

lowshot_status lowshot_operator_gaussian(int64_t m, int64_t n, uint64_t seed,
                                         lowshot_operator** out) {
    if (auto s = need(out != nullptr, "out")) return s;
    return wrap([&] { *out = new lowshot_operator{lowshot::MeasureOp<float>::gaussian(m, n, seed)}; });
}

lowshot_status lowshot_operator_luma(int64_t h, int64_t w, lowshot_operator** out) {
    if (auto s = need(out != nullptr, "out")) return s;
    return wrap([&] { *out = new lowshot_operator{lowshot::MeasureOp<float>::luma(h, w)}; });
}

lowshot_status lowshot_operator_identity(int64_t n, lowshot_operator** out) {
    if (auto s = need(out != nullptr, "out")) return s;
    return wrap([&] { *out = new lowshot_operator{lowshot::MeasureOp<float>::identity(n)}; });
}

void lowshot_operator_close(lowshot_operator* op) { delete op; }

lowshot_status lowshot_operator_info(const lowshot_operator* op, int64_t* m, int64_t* n) {
    if (auto s = need(op != nullptr, "operator")) return s;
    if (m) *m = op->op.m();
    if (n) *n = op->op.n();
    return LOWSHOT_OK;
}

lowshot_status lowshot_operator_apply(const lowshot_operator* op, const float* x, size_t x_len,
                                      float* y, size_t y_len) {
    if (auto s = need(op && x && y, "operator/x/y")) return s;
    return wrap([&] {
        if (x_len != static_cast<std::size_t>(op->op.n()))
            throw lowshot::ShapeError("input holds " + std::to_string(x_len) + " values, operator takes " +
                                      std::to_string(op->op.n()));
        lowshot::Shape in_shape;
        if (op->op.kind() == lowshot::MeasureOp<float>::Kind::luma)
            in_shape = {3, op->op.height(), op->op.width()};
        else
            in_shape = {static_cast<std::int64_t>(x_len)};
        tensor_to(op->op.apply(tensor_from(x, in_shape)), y, y_len);
    });
}

lowshot_status lowshot_add_noise(float* y, size_t len, double noise_std, uint64_t seed) {
    if (auto s = need(y != nullptr && len > 0, "y/len")) return s;
    return wrap([&] {
        const auto noisy =
            lowshot::add_noise(tensor_from(y, {static_cast<std::int64_t>(len)}), noise_std, seed);
        std::memcpy(y, noisy.values.data(), len * sizeof(float));
    });
}

lowshot_status lowshot_invert(const lowshot_model* model, const lowshot_operator* op,
                              const float* y, size_t y_len, const char* config_json,
                              lowshot_result** out) {
    if (auto s = need(model && op && y && config_json && out, "model/op/y/config/out")) return s;
    return wrap([&] {
        if (y_len != static_cast<std::size_t>(op->op.m()))
            throw lowshot::ShapeError("measurement holds " + std::to_string(y_len) +
                                      " values, operator yields " + std::to_string(op->op.m()));
        const lowshot::RunConfig cfg = lowshot::parse_config_json(config_json);
        auto yt = tensor_from(y, {static_cast<std::int64_t>(y_len)});
        const auto r = model->model.desc.resolution;
        if (op->op.kind() == lowshot::MeasureOp<float>::Kind::luma)
            yt = yt.reshaped({r, r});
        else if (op->op.kind() == lowshot::MeasureOp<float>::Kind::identity && op->op.n() == 3 * r * r)
            yt = yt.reshaped({3, r, r});  // identity passes the decoder shape through
        auto res = lowshot::invert(yt, op->op, model->model,
                                   lowshot::config_inversion(cfg, cfg.seed));
        *out = new lowshot_result{std::move(res)};
    });
}

lowshot_status lowshot_invert_untrained(const lowshot_operator* op, const float* y, size_t y_len,
                                        const char* config_json, double ratio,
                                        lowshot_result** out) {
    if (auto s = need(op && y && config_json && out, "op/y/config/out")) return s;
    return wrap([&] {
        if (y_len != static_cast<std::size_t>(op->op.m()))
            throw lowshot::ShapeError("measurement holds " + std::to_string(y_len) +
                                      " values, operator yields " + std::to_string(op->op.m()));
        const lowshot::RunConfig cfg = lowshot::parse_config_json(config_json);
        const lowshot::DecoderDesc desc = lowshot::config_desc(cfg);
        auto yt = tensor_from(y, {static_cast<std::int64_t>(y_len)});
        if (op->op.kind() == lowshot::MeasureOp<float>::Kind::luma)
            yt = yt.reshaped({cfg.resolution, cfg.resolution});
        else if (op->op.kind() == lowshot::MeasureOp<float>::Kind::identity &&
                 op->op.n() == 3 * cfg.resolution * cfg.resolution)
            yt = yt.reshaped({3, cfg.resolution, cfg.resolution});
        lowshot::UntrainedConfig ucfg;
        ucfg.lr = cfg.untrained_lr;
        ucfg.momentum = cfg.untrained_momentum;
        ucfg.seed = cfg.seed;
        auto res = lowshot::solve_untrained(yt, op->op, desc, ratio, ucfg);
        *out = new lowshot_result{std::move(res)};
    });
}

void lowshot_result_close(lowshot_result* res) { delete res; }

lowshot_status lowshot_result_image(const lowshot_result* res, float* out, size_t out_len) {
    if (auto s = need(res && out, "result/out")) return s;
    return wrap([&] { tensor_to(res->res.reconstruction, out, out_len); });
}

lowshot_status lowshot_result_stats(const lowshot_result* res, double* stage1_final,
                                    double* stage2_final, double* measurement_loss) {
    if (auto s = need(res != nullptr, "result")) return s;
    if (stage1_final) *stage1_final = res->res.stage1.final_loss;
    if (stage2_final) *stage2_final = res->res.stage2.final_loss;
    if (measurement_loss) *measurement_loss = res->res.measurement_loss;
    return LOWSHOT_OK;
}

lowshot_status lowshot_run_pretrain(const char* config_json, char** manifest_json_out) {
    if (auto s = need(config_json != nullptr, "config")) return s;
    return wrap([&] {
        const lowshot::RunConfig cfg = lowshot::parse_config_json(config_json);
        const auto paths = lowshot::run_pretrain_all(cfg);
        if (manifest_json_out) {
            nlohmann::json j;
            j["checkpoints"] = paths;
            *manifest_json_out = alloc_string(j.dump(2));
        }
    });
}

lowshot_status lowshot_run_sweep(const char* config_json, int64_t* cells_total,
                                 int64_t* cells_completed, int32_t* finalized) {
    if (auto s = need(config_json != nullptr, "config")) return s;
    return wrap([&] {
        const lowshot::RunConfig cfg = lowshot::parse_config_json(config_json);
        const auto outcome = lowshot::run_sweep(cfg);
        if (cells_total) *cells_total = static_cast<int64_t>(outcome.total);
        if (cells_completed) *cells_completed = static_cast<int64_t>(outcome.completed);
        if (finalized) *finalized = outcome.finalized ? 1 : 0;
        if (outcome.failed > 0) {
            std::string msg = std::to_string(outcome.failed) + " cell(s) failed";
            for (const auto& f : outcome.failures) msg += "\n  " + f;
            throw lowshot::NumericError(msg);
        }
    });
}

lowshot_status lowshot_run_invert_file(const char* config_json, const char* image_path,
                                       const char* checkpoint_path, char** report_json_out) {
    if (auto s = need(config_json && image_path && checkpoint_path, "config/image/checkpoint"))
        return s;
    return wrap([&] {
        const lowshot::RunConfig cfg = lowshot::parse_config_json(config_json);
        const auto r = lowshot::run_invert_file(cfg, image_path, checkpoint_path);
        if (report_json_out) {
            nlohmann::json j;
            j["psnr"] = r.psnr;
            j["stage1_final"] = r.stage1_final;
            j["stage2_final"] = r.stage2_final;
            j["reconstruction"] = r.reconstruction_path;
            *report_json_out = alloc_string(j.dump(2));
        }
    });
}

lowshot_status lowshot_render_plot(const char* csv_path, const char* svg_path) {
    if (auto s = need(csv_path && svg_path, "csv/svg")) return s;
    return wrap([&] { lowshot::emit_plot(csv_path, svg_path); });
}

lowshot_status lowshot_run_gradcheck(const char* config_json, char** report_json_out) {
    return wrap([&] {
        const lowshot::GradCheckConfig cfg =
            lowshot::parse_gradcheck_json(config_json ? config_json : "{}");
        const auto report = lowshot::run_gradcheck(cfg);
        if (report_json_out) *report_json_out = alloc_string(lowshot::gradcheck_report_json(report));
    });
}

}  // extern "C"
