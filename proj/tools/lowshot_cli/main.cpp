// Command-line front end. Talks to the core exclusively through the C API so
// the shared library stays the single supported entry point.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lowshot/lowshot.h"

using nlohmann::json;

namespace {

struct ConfigFlags {
    std::string config_path;
    std::string task, data_dir, out_dir, checkpoint_dir, mmd_estimator;
    std::vector<double> ratios;
    std::vector<std::int64_t> shots;
    std::vector<std::string> losses;
    std::int64_t resolution = -1, latent_dim = -1, base_channels = -1, test_count = -1;
    std::int64_t pretrain_iterations = -1, stage1_iterations = -1, stage2_iterations = -1;
    std::int64_t restarts = -1, max_cells = -1, workers = -1;
    double noise_std = -1, pretrain_lr = -1, stage1_lr = -1, stage2_lr = -1;
    double untrained_lr = -1, untrained_momentum = -1, mmd_alpha = -1;
    std::int64_t seed = -1;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its fields");
    cmd->add_option("--data-dir", f.data_dir, "directory of PNG/JPEG images");
    cmd->add_option("--out-dir", f.out_dir, "output directory");
    cmd->add_option("--checkpoint-dir", f.checkpoint_dir, "model checkpoint directory");
    cmd->add_option("--ratios", f.ratios, "compression ratios m/n")->delimiter(',');
    cmd->add_option("--shots", f.shots, "shot counts S")->delimiter(',');
    cmd->add_option("--losses", f.losses, "loss kinds (l2, mmd)")->delimiter(',');
    cmd->add_option("--resolution", f.resolution, "image resolution");
    cmd->add_option("--latent-dim", f.latent_dim, "latent dimension k");
    cmd->add_option("--base-channels", f.base_channels, "decoder channels at 4x4");
    cmd->add_option("--test-count", f.test_count, "number of test images");
    cmd->add_option("--seed", f.seed, "root seed");
    cmd->add_option("--noise-std", f.noise_std, "measurement noise std");
    cmd->add_option("--pretrain-iterations", f.pretrain_iterations, "pretraining iterations");
    cmd->add_option("--pretrain-lr", f.pretrain_lr, "pretraining learning rate");
    cmd->add_option("--mmd-alpha", f.mmd_alpha, "kernel bandwidth, 0 = median heuristic");
    cmd->add_option("--mmd-estimator", f.mmd_estimator, "pairwise or unbiased");
    cmd->add_option("--stage1-iterations", f.stage1_iterations, "latent-search iterations");
    cmd->add_option("--stage1-lr", f.stage1_lr, "latent-search learning rate");
    cmd->add_option("--stage2-iterations", f.stage2_iterations, "joint refinement iterations");
    cmd->add_option("--stage2-lr", f.stage2_lr, "joint refinement learning rate");
    cmd->add_option("--restarts", f.restarts, "latent-search restarts");
    cmd->add_option("--untrained-lr", f.untrained_lr, "baseline learning rate");
    cmd->add_option("--untrained-momentum", f.untrained_momentum, "baseline momentum");
    cmd->add_option("--max-cells", f.max_cells, "stop after this many new cells (0 = no cap)");
    cmd->add_option("--workers", f.workers, "worker threads (overrides LOWSHOT_WORKERS)");
}

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return json::parse(text);
}

std::string build_config(const ConfigFlags& f, const std::string& forced_task = "") {
    json j = f.config_path.empty() ? json::object() : load_json_file(f.config_path);
    auto set_str = [&](const char* k, const std::string& v) {
        if (!v.empty()) j[k] = v;
    };
    set_str("task", f.task);
    set_str("data_dir", f.data_dir);
    set_str("out_dir", f.out_dir);
    set_str("checkpoint_dir", f.checkpoint_dir);
    set_str("mmd_estimator", f.mmd_estimator);
    if (!f.ratios.empty()) j["ratios"] = f.ratios;
    if (!f.shots.empty()) j["shots"] = f.shots;
    if (!f.losses.empty()) j["losses"] = f.losses;
    auto set_i = [&](const char* k, std::int64_t v) {
        if (v >= 0) j[k] = v;
    };
    set_i("resolution", f.resolution);
    set_i("latent_dim", f.latent_dim);
    set_i("base_channels", f.base_channels);
    set_i("test_count", f.test_count);
    set_i("seed", f.seed);
    set_i("pretrain_iterations", f.pretrain_iterations);
    set_i("stage1_iterations", f.stage1_iterations);
    set_i("stage2_iterations", f.stage2_iterations);
    set_i("restarts", f.restarts);
    set_i("max_cells", f.max_cells);
    set_i("workers", f.workers);
    auto set_d = [&](const char* k, double v) {
        if (v >= 0) j[k] = v;
    };
    set_d("noise_std", f.noise_std);
    set_d("pretrain_lr", f.pretrain_lr);
    set_d("mmd_alpha", f.mmd_alpha);
    set_d("stage1_lr", f.stage1_lr);
    set_d("stage2_lr", f.stage2_lr);
    set_d("untrained_lr", f.untrained_lr);
    set_d("untrained_momentum", f.untrained_momentum);
    if (!forced_task.empty()) j["task"] = forced_task;
    return j.dump();
}

int report_failure(const char* what, lowshot_status st) {
    std::cerr << what << " failed (status " << st << "): " << lowshot_last_error() << "\n";
    return 1;
}

int do_sweep(const ConfigFlags& flags, const std::string& task) {
    const std::string cfg = build_config(flags, task);
    int64_t total = 0, completed = 0;
    int32_t finalized = 0;
    const lowshot_status st = lowshot_run_sweep(cfg.c_str(), &total, &completed, &finalized);
    std::cout << "cells " << completed << "/" << total
              << (finalized ? ", finalized" : ", not finalized") << "\n";
    if (st != LOWSHOT_OK) return report_failure("sweep", st);
    return finalized ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-shot image priors for inverse problems"};
    app.require_subcommand(1);

    ConfigFlags pretrain_flags;
    auto* cmd_pretrain = app.add_subcommand("pretrain", "train one model per (shots, loss) pair");
    add_config_flags(cmd_pretrain, pretrain_flags);

    ConfigFlags invert_flags;
    std::string invert_image, invert_checkpoint;
    auto* cmd_invert = app.add_subcommand("invert", "reconstruct one image from measurements");
    add_config_flags(cmd_invert, invert_flags);
    cmd_invert->add_option("--image", invert_image, "ground-truth image file")->required();
    cmd_invert->add_option("--checkpoint", invert_checkpoint, "model checkpoint")->required();

    ConfigFlags sweep_flags;
    auto* cmd_sweep = app.add_subcommand("sweep-cs", "compressed-sensing sweep over (ratio, S, loss)");
    add_config_flags(cmd_sweep, sweep_flags);

    ConfigFlags color_flags;
    auto* cmd_color = app.add_subcommand("colorize", "colorization sweep and image grid");
    add_config_flags(cmd_color, color_flags);

    std::string plot_csv, plot_svg;
    auto* cmd_plot = app.add_subcommand("plot", "render a results CSV to an SVG curve plot");
    cmd_plot->add_option("--csv", plot_csv, "results csv")->required();
    cmd_plot->add_option("--svg", plot_svg, "output svg")->required();

    std::string grad_config;
    std::int64_t grad_points = -1, grad_seed = -1;
    double grad_tol = -1;
    auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    cmd_grad->add_option("--config", grad_config, "JSON gradcheck config");
    cmd_grad->add_option("--points", grad_points, "evaluation points per objective");
    cmd_grad->add_option("--tol", grad_tol, "max relative error tolerance");
    cmd_grad->add_option("--seed", grad_seed, "seed");

    CLI11_PARSE(app, argc, argv);

    if (cmd_pretrain->parsed()) {
        const std::string cfg = build_config(pretrain_flags);
        char* manifest = nullptr;
        const lowshot_status st = lowshot_run_pretrain(cfg.c_str(), &manifest);
        if (st != LOWSHOT_OK) return report_failure("pretrain", st);
        std::cout << manifest << "\n";
        lowshot_string_free(manifest);
        return 0;
    }
    if (cmd_invert->parsed()) {
        const std::string cfg = build_config(invert_flags);
        char* report = nullptr;
        const lowshot_status st =
            lowshot_run_invert_file(cfg.c_str(), invert_image.c_str(), invert_checkpoint.c_str(), &report);
        if (st != LOWSHOT_OK) return report_failure("invert", st);
        std::cout << report << "\n";
        lowshot_string_free(report);
        return 0;
    }
    if (cmd_sweep->parsed()) return do_sweep(sweep_flags, "cs");
    if (cmd_color->parsed()) return do_sweep(color_flags, "colorization");
    if (cmd_plot->parsed()) {
        const lowshot_status st = lowshot_render_plot(plot_csv.c_str(), plot_svg.c_str());
        if (st != LOWSHOT_OK) return report_failure("plot", st);
        std::cout << "wrote " << plot_svg << "\n";
        return 0;
    }
    if (cmd_grad->parsed()) {
        json j = grad_config.empty() ? json::object() : load_json_file(grad_config);
        if (grad_points >= 0) j["points"] = grad_points;
        if (grad_tol >= 0) j["tol"] = grad_tol;
        if (grad_seed >= 0) j["seed"] = grad_seed;
        const std::string cfg = j.dump();
        char* report = nullptr;
        const lowshot_status st = lowshot_run_gradcheck(cfg.c_str(), &report);
        if (st != LOWSHOT_OK) return report_failure("gradcheck", st);
        std::cout << report << "\n";
        const bool pass = json::parse(report).at("pass").get<bool>();
        lowshot_string_free(report);
        return pass ? 0 : 1;
    }
    return 1;
}
