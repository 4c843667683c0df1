#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowshot/decoder.hpp"
#include "lowshot/invert.hpp"
#include "lowshot/verify.hpp"

namespace lowshot {

// One flat configuration drives every subcommand; file keys and flag
// overrides share these names. Unknown keys are rejected so typos surface
// instead of silently running defaults.
struct RunConfig {
    std::string task = "cs";  // cs | colorization
    std::string data_dir;
    std::string out_dir = ".";
    std::string checkpoint_dir;

    std::int64_t resolution = 64;
    std::int64_t latent_dim = 128;
    std::int64_t base_channels = 512;
    double bn_eps = 1e-5;

    std::vector<double> ratios{0.1};
    std::vector<int> shots{5};
    std::vector<std::string> losses{"l2"};
    int test_count = 50;
    std::uint64_t seed = 0;
    double noise_std = 0.0;

    std::int64_t pretrain_iterations = 50000;
    double pretrain_lr = 1e-3;
    double mmd_alpha = 0.0;  // 0: median heuristic
    std::string mmd_estimator = "pairwise";

    std::int64_t stage1_iterations = 1250;
    double stage1_lr = 5e-2;
    std::int64_t stage2_iterations = 350;
    double stage2_lr = 1e-4;
    int restarts = 1;

    double untrained_lr = 1e-3;
    double untrained_momentum = 0.9;

    int max_cells = 0;  // 0: run everything; otherwise stop after N new cells
    int workers = 0;    // 0: LOWSHOT_WORKERS env var, else 1
};

RunConfig parse_config_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

GradCheckConfig parse_gradcheck_json(const std::string& text);
std::string gradcheck_report_json(const GradCheckReport& report);

DecoderDesc config_desc(const RunConfig& cfg);
InversionConfig config_inversion(const RunConfig& cfg, std::uint64_t seed);

}  // namespace lowshot
