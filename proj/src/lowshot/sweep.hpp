#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lowshot/checkpoint.hpp"
#include "lowshot/config.hpp"
#include "lowshot/dataset.hpp"

namespace lowshot {

// One unit of sweep work: a (task, ratio, shots, loss, method, image) tuple.
// The recorded seed plus the run config is enough to redo the cell in
// isolation; operator and noise seeds are keyed by (task, ratio, image) alone
// so every method solves the same measurement problem on a given image.
struct CellSpec {
    std::string task;
    double ratio = 0;
    std::string ratio_str;  // exact CSV field bytes, also feeds seed derivation
    int shots = 0;          // 0 for the untrained baseline
    std::string loss;       // "l2" | "mmd" | "none"
    std::string method;     // "lowshot" | "untrained"
    std::uint64_t seed = 0;
    std::uint64_t op_seed = 0;
    std::uint64_t noise_seed = 0;
    int image_index = 0;
    std::string image_id;  // content digest prefix

    std::string key() const;  // first seven CSV fields, the resume key
};

struct CellOutcome {
    double psnr = 0;
    long long wall_ms = 0;
    Tensor<float> reconstruction;  // [-1,1]
    double stage1_final = 0;       // measurement loss after the latent stage
    double stage2_final = 0;       // after joint refinement (== stage1 for untrained)
};

std::string format_ratio(double ratio);
std::string format_row(const CellSpec& cell, double psnr_db, long long wall_ms);
std::string checkpoint_name(int shots, const std::string& loss);
std::string psnr_label(double psnr_db);

std::vector<CellSpec> enumerate_cells(const RunConfig& cfg, const std::vector<DatasetEntry>& test);

// model may be null for untrained cells.
CellOutcome run_cell(const CellSpec& cell, const Tensor<float>& truth, const Model<float>* model,
                     const RunConfig& cfg);

// Stacks image cells into one big [3, rows*R, cols*R] canvas, burning the
// label strings into their cells. Values round-trip through 8-bit levels so
// the result matches the PNG that save_image_png would produce.
Tensor<float> compose_grid(const std::vector<std::vector<Tensor<float>>>& rows,
                           const std::vector<std::vector<std::string>>& labels);

using CellObserver = std::function<void(const CellSpec&, const CellOutcome&)>;

struct SweepOutcome {
    std::size_t total = 0;      // cells in this sweep
    std::size_t completed = 0;  // rows present when this call returned
    std::size_t ran = 0;        // computed by this call
    std::size_t failed = 0;
    std::vector<std::string> failures;
    bool finalized = false;  // canonical CSV + summary (+ grid) written
    std::string csv_path;
    std::string summary_path;
    std::string grid_path;  // colorization only
};

// Runs the sweep described by cfg (cs or colorization), resuming from any
// rows already in the output CSV. The observer, when set, sees each cell
// computed by this call (serialized by the writer lock).
SweepOutcome run_sweep(const RunConfig& cfg, const CellObserver& observer = {});

// Trains one model per (shots, loss) pair in cfg, skipping checkpoints that
// already exist. Returns the checkpoint paths in order.
std::vector<std::string> run_pretrain_all(const RunConfig& cfg);

struct InvertOutcome {
    double psnr = 0;
    double stage1_final = 0;
    double stage2_final = 0;
    std::string reconstruction_path;
};

InvertOutcome run_invert_file(const RunConfig& cfg, const std::string& image_path,
                              const std::string& checkpoint_path);

// cfg.workers if set, else LOWSHOT_WORKERS, else 1.
int worker_count(const RunConfig& cfg);

}  // namespace lowshot
