#include "lowshot/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "lowshot/csv.hpp"
#include "lowshot/invert.hpp"
#include "lowshot/losses.hpp"
#include "lowshot/pretrain.hpp"

namespace fs = std::filesystem;

namespace lowshot {

namespace {

void write_file_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot replace " + path);
    }
}

// Append-mode row store keyed by the first seven CSV fields. Completed rows
// are kept verbatim so a resumed sweep reproduces their bytes exactly; only
// a trailing line that may have been cut off mid-write is dropped.
class CsvStore {
public:
    explicit CsvStore(std::string path) : path_(std::move(path)) { load(); }

    bool has(const std::string& key) const { return rows_.count(key) != 0; }
    const std::string& row(const std::string& key) const { return rows_.at(key); }
    std::size_t size() const { return rows_.size(); }
    const std::unordered_map<std::string, std::string>& rows() const { return rows_; }

    void append(const std::string& key, const std::string& line) {
        if (!rows_.emplace(key, line).second) throw IoError("duplicate result row for " + key);
        order_.push_back(key);
        if (!out_.is_open()) {
            out_.open(path_, std::ios::binary | std::ios::app);
            if (!out_) throw IoError("cannot open " + path_ + " for append");
            if (!header_written_) {
                out_ << kResultCsvHeader << '\n';
                header_written_ = true;
            }
        }
        out_ << line << '\n';
        out_.flush();
        if (!out_) throw IoError("short write to " + path_);
    }

    // Rewrites the file with rows in the given order; every key must have a row.
    void canonicalize(const std::vector<std::string>& key_order) {
        if (out_.is_open()) out_.close();
        std::string text = kResultCsvHeader;
        text += '\n';
        for (const auto& k : key_order) {
            auto it = rows_.find(k);
            if (it == rows_.end()) throw IoError("cannot finalize csv, missing row for " + k);
            text += it->second;
            text += '\n';
        }
        write_file_atomic(path_, text);
        header_written_ = true;
    }

private:
    void load() {
        std::ifstream in(path_, std::ios::binary);
        if (!in) return;
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (text.empty()) return;

        const bool complete_tail = text.back() == '\n';
        std::vector<std::string> lines;
        std::string cur;
        for (char c : text) {
            if (c == '\n') {
                lines.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) lines.push_back(std::move(cur));

        if (lines[0] != kResultCsvHeader)
            throw IoError(path_ + " is not a results csv (unexpected header)");
        header_written_ = true;

        bool dropped_tail = false;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const bool last = i + 1 == lines.size();
            if (last && !complete_tail) {
                // Possibly cut off mid-row; recompute that cell instead.
                dropped_tail = true;
                break;
            }
            const auto f = split_csv(lines[i]);
            if (f.size() != 9) {
                if (last) {
                    dropped_tail = true;
                    break;
                }
                throw IoError("corrupt row in " + path_ + " at line " + std::to_string(i + 1));
            }
            std::string key = f[0];
            for (int j = 1; j < 7; ++j) {
                key += ',';
                key += f[j];
            }
            if (!rows_.emplace(key, lines[i]).second)
                throw IoError("duplicate row in " + path_ + " at line " + std::to_string(i + 1));
            order_.push_back(std::move(key));
        }
        if (dropped_tail) canonicalize(order_);
    }

    std::string path_;
    std::ofstream out_;
    bool header_written_ = false;
    std::unordered_map<std::string, std::string> rows_;
    std::vector<std::string> order_;
};

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

double parse_psnr_field(const std::string& line) {
    const auto f = split_csv(line);
    return std::strtod(f[7].c_str(), nullptr);
}

MeasureOp<float> cell_operator(const CellSpec& cell, std::int64_t resolution) {
    if (cell.task == "colorization") return MeasureOp<float>::luma(resolution, resolution);
    const std::int64_t n = 3 * resolution * resolution;
    const std::int64_t m =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(cell.ratio * static_cast<double>(n))));
    return MeasureOp<float>::gaussian(m, n, cell.op_seed);
}

std::string recon_name(const CellSpec& cell) {
    return cell.method + "_S" + std::to_string(cell.shots) + "_" + cell.loss + "_" + cell.image_id +
           ".png";
}

void write_sweep_manifest(const RunConfig& cfg, const std::vector<CellSpec>& cells,
                          const DatasetManifest& dm,
                          const std::map<std::string, std::string>& checkpoint_digests,
                          const std::string& path) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config_to_json(cfg));
    j["cells"] = cells.size();
    j["checkpoints"] = checkpoint_digests;
    nlohmann::json test = nlohmann::json::array();
    for (const auto& e : dm.test) test.push_back(e.digest);
    j["test_images"] = test;
    j["skipped_files"] = dm.skipped;
    j["duplicate_files"] = dm.duplicates;
    j["preprocess"] = dm.recipe;
    write_file_atomic(path, j.dump(2) + "\n");
}

void write_summary(const std::string& path, const std::vector<CellSpec>& cells,
                   const CsvStore& store) {
    // Aggregates are computed from the psnr fields as written, so re-deriving
    // them from the CSV reproduces these numbers exactly.
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    for (const auto& c : cells) {
        const std::string g = c.task + "," + c.ratio_str + "," + std::to_string(c.shots) + "," +
                              c.loss + "," + c.method;
        auto it = groups.find(g);
        if (it == groups.end()) {
            order.push_back(g);
            it = groups.emplace(g, std::vector<double>{}).first;
        }
        it->second.push_back(parse_psnr_field(store.row(c.key())));
    }
    std::string text = "task,ratio,S,loss,method,count,psnr_mean,psnr_std\n";
    for (const auto& g : order) {
        const auto& v = groups.at(g);
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0;
        if (v.size() > 1) {
            for (double x : v) var += (x - mean) * (x - mean);
            var /= static_cast<double>(v.size() - 1);
        }
        char buf[96];
        std::snprintf(buf, sizeof(buf), ",%zu,%.9f,%.9f\n", v.size(), mean, std::sqrt(var));
        text += g;
        text += buf;
    }
    write_file_atomic(path, text);
}

Tensor<float> replicate_gray(const Tensor<float>& image01_luma) {
    const std::int64_t h = image01_luma.shape[0], w = image01_luma.shape[1];
    Tensor<float> out = Tensor<float>::zeros({3, h, w});
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < h * w; ++i)
            out[c * h * w + i] = image01_luma[i] * 2.0f - 1.0f;
    return out;
}

void write_grid(const RunConfig& cfg, const Dataset& ds, const std::vector<CellSpec>& cells,
                const CsvStore& store, const std::string& recon_dir, const std::string& png_path) {
    const std::int64_t r = cfg.resolution;
    const std::size_t cols = ds.test.size();

    std::vector<std::vector<Tensor<float>>> rows;
    std::vector<std::vector<std::string>> labels;

    rows.push_back(ds.test);
    labels.emplace_back(cols);

    MeasureOp<float> lum = MeasureOp<float>::luma(r, r);
    std::vector<Tensor<float>> gray;
    gray.reserve(cols);
    for (const auto& t : ds.test) gray.push_back(replicate_gray(lum.apply(unit_range(t))));
    rows.push_back(std::move(gray));
    labels.emplace_back(cols);

    // One grid row per method group: untrained first, then each (S, loss).
    std::vector<std::pair<int, std::string>> plan;
    plan.emplace_back(0, "none");
    for (int s : cfg.shots)
        for (const auto& loss : cfg.losses) plan.emplace_back(s, loss);

    for (const auto& [s, loss] : plan) {
        std::vector<Tensor<float>> imgs(cols);
        std::vector<std::string> labs(cols);
        for (const auto& c : cells) {
            if (c.shots != s || c.loss != loss) continue;
            imgs[static_cast<std::size_t>(c.image_index)] =
                load_image(join_path(recon_dir, recon_name(c)), r);
            labs[static_cast<std::size_t>(c.image_index)] =
                psnr_label(parse_psnr_field(store.row(c.key())));
        }
        rows.push_back(std::move(imgs));
        labels.push_back(std::move(labs));
    }

    save_image_png(png_path, compose_grid(rows, labels));
}

}  // namespace

std::string format_ratio(double ratio) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", ratio);
    return buf;
}

std::string CellSpec::key() const {
    char seed_buf[24];
    std::snprintf(seed_buf, sizeof(seed_buf), "%llu", static_cast<unsigned long long>(seed));
    return task + "," + ratio_str + "," + std::to_string(shots) + "," + loss + "," + method + "," +
           seed_buf + "," + image_id;
}

std::string format_row(const CellSpec& cell, double psnr_db, long long wall_ms) {
    char tail[64];
    std::snprintf(tail, sizeof(tail), ",%.6f,%lld", psnr_db, wall_ms);
    return cell.key() + tail;
}

std::string checkpoint_name(int shots, const std::string& loss) {
    return "model_S" + std::to_string(shots) + "_" + loss + ".ckpt";
}

std::string psnr_label(double psnr_db) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", psnr_db);
    return buf;
}

std::vector<CellSpec> enumerate_cells(const RunConfig& cfg, const std::vector<DatasetEntry>& test) {
    std::vector<CellSpec> cells;
    std::vector<double> ratios;
    if (cfg.task == "colorization") {
        const auto n = static_cast<double>(3 * cfg.resolution * cfg.resolution);
        ratios.push_back(static_cast<double>(cfg.resolution * cfg.resolution) / n);
    } else {
        ratios = cfg.ratios;
    }

    auto add = [&](double ratio, int s, const std::string& loss, const std::string& method) {
        for (std::size_t i = 0; i < test.size(); ++i) {
            CellSpec c;
            c.task = cfg.task;
            c.ratio = ratio;
            c.ratio_str = format_ratio(ratio);
            c.shots = s;
            c.loss = loss;
            c.method = method;
            c.image_index = static_cast<int>(i);
            c.image_id = test[i].digest.substr(0, 12);
            const std::string ident = c.task + "," + c.ratio_str + "," + std::to_string(s) + "," +
                                      loss + "," + method + "," + c.image_id;
            c.seed = derive_seed(cfg.seed, "cell:" + ident);
            const std::string problem = c.task + "," + c.ratio_str + "," + c.image_id;
            c.op_seed = derive_seed(cfg.seed, "op:" + problem);
            c.noise_seed = derive_seed(cfg.seed, "noise:" + problem);
            cells.push_back(std::move(c));
        }
    };

    for (double ratio : ratios) {
        for (int s : cfg.shots)
            for (const auto& loss : cfg.losses) add(ratio, s, loss, "lowshot");
        add(ratio, 0, "none", "untrained");
    }
    return cells;
}

CellOutcome run_cell(const CellSpec& cell, const Tensor<float>& truth, const Model<float>* model,
                     const RunConfig& cfg) {
    const DecoderDesc desc = config_desc(cfg);
    if (truth.shape != Shape{3, cfg.resolution, cfg.resolution})
        throw ShapeError("test image " + shape_str(truth.shape) + " vs configured resolution " +
                         std::to_string(cfg.resolution));

    const MeasureOp<float> op = cell_operator(cell, cfg.resolution);
    const Tensor<float> truth01 = unit_range(truth);
    const Measurement<float> meas =
        add_noise(op.apply(truth01), cfg.noise_std, cell.noise_seed);

    const auto t0 = std::chrono::steady_clock::now();
    InversionResult<float> res;
    if (cell.method == "lowshot") {
        if (model == nullptr) throw ConfigError("lowshot cell needs a trained model");
        res = invert(meas.values, op, *model, config_inversion(cfg, derive_seed(cell.seed, "inv")));
    } else if (cell.method == "untrained") {
        UntrainedConfig ucfg;
        ucfg.lr = cfg.untrained_lr;
        ucfg.momentum = cfg.untrained_momentum;
        ucfg.seed = derive_seed(cell.seed, "inv");
        res = solve_untrained(meas.values, op, desc, cell.ratio, ucfg);
    } else {
        throw ConfigError("unknown method '" + cell.method + "'");
    }
    const auto t1 = std::chrono::steady_clock::now();

    CellOutcome out;
    out.psnr = psnr(truth01, unit_range(res.reconstruction));
    out.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    out.reconstruction = std::move(res.reconstruction);
    out.stage1_final = res.stage1.final_loss;
    out.stage2_final = res.stage2.final_loss;
    return out;
}

Tensor<float> compose_grid(const std::vector<std::vector<Tensor<float>>>& rows,
                           const std::vector<std::vector<std::string>>& labels) {
    if (rows.empty() || rows[0].empty()) throw ConfigError("grid needs at least one cell");
    const std::size_t nrows = rows.size(), ncols = rows[0].size();
    if (labels.size() != nrows) throw ShapeError("grid labels do not match rows");
    const Shape cell_shape = rows[0][0].shape;
    if (cell_shape.size() != 3 || cell_shape[0] != 3)
        throw ShapeError("grid cells must be [3,H,W], got " + shape_str(cell_shape));
    const std::int64_t h = cell_shape[1], w = cell_shape[2];

    cv::Mat canvas(static_cast<int>(nrows * static_cast<std::size_t>(h)),
                   static_cast<int>(ncols * static_cast<std::size_t>(w)), CV_8UC3);
    for (std::size_t ri = 0; ri < nrows; ++ri) {
        if (rows[ri].size() != ncols || labels[ri].size() != ncols)
            throw ShapeError("grid row " + std::to_string(ri) + " has a different column count");
        for (std::size_t ci = 0; ci < ncols; ++ci) {
            const Tensor<float>& t = rows[ri][ci];
            if (t.shape != cell_shape)
                throw ShapeError("grid cell (" + std::to_string(ri) + "," + std::to_string(ci) +
                                 ") is " + shape_str(t.shape) + ", expected " + shape_str(cell_shape));
            const int y0 = static_cast<int>(ri * static_cast<std::size_t>(h));
            const int x0 = static_cast<int>(ci * static_cast<std::size_t>(w));
            for (std::int64_t y = 0; y < h; ++y) {
                cv::Vec3b* row = canvas.ptr<cv::Vec3b>(y0 + static_cast<int>(y));
                for (std::int64_t x = 0; x < w; ++x) {
                    auto level = [&](std::int64_t c) {
                        const float v = (t[c * h * w + y * w + x] + 1.0f) * 127.5f;
                        return static_cast<unsigned char>(std::clamp(std::lround(v), 0l, 255l));
                    };
                    row[x0 + x] = cv::Vec3b(level(2), level(1), level(0));
                }
            }
            if (!labels[ri][ci].empty()) {
                const double scale = h >= 64 ? 0.4 : 0.3;
                const cv::Point org(x0 + 3, y0 + static_cast<int>(h) - 5);
                cv::putText(canvas, labels[ri][ci], org, cv::FONT_HERSHEY_SIMPLEX, scale,
                            cv::Scalar(0, 0, 0), 2, cv::LINE_8);
                cv::putText(canvas, labels[ri][ci], org, cv::FONT_HERSHEY_SIMPLEX, scale,
                            cv::Scalar(255, 255, 255), 1, cv::LINE_8);
            }
        }
    }

    Tensor<float> out = Tensor<float>::zeros(
        {3, static_cast<std::int64_t>(nrows) * h, static_cast<std::int64_t>(ncols) * w});
    const std::int64_t gh = out.shape[1], gw = out.shape[2];
    for (std::int64_t y = 0; y < gh; ++y) {
        const cv::Vec3b* row = canvas.ptr<cv::Vec3b>(static_cast<int>(y));
        for (std::int64_t x = 0; x < gw; ++x) {
            out[0 * gh * gw + y * gw + x] = static_cast<float>(row[x][2]) / 127.5f - 1.0f;
            out[1 * gh * gw + y * gw + x] = static_cast<float>(row[x][1]) / 127.5f - 1.0f;
            out[2 * gh * gw + y * gw + x] = static_cast<float>(row[x][0]) / 127.5f - 1.0f;
        }
    }
    return out;
}

int worker_count(const RunConfig& cfg) {
    if (cfg.workers > 0) return cfg.workers;
    if (const char* env = std::getenv("LOWSHOT_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError("LOWSHOT_WORKERS must be a positive integer, got '" +
                              std::string(env) + "'");
        return static_cast<int>(std::min<long>(v, 256));
    }
    return 1;
}

SweepOutcome run_sweep(const RunConfig& cfg, const CellObserver& observer) {
    const DecoderDesc desc = config_desc(cfg);
    const bool color = cfg.task == "colorization";
    fs::create_directories(cfg.out_dir);
    const std::string recon_dir = join_path(cfg.out_dir, "recon");
    if (color) fs::create_directories(recon_dir);

    const Dataset ds = load_dataset(cfg.data_dir, cfg.resolution, 0, cfg.test_count);

    // All referenced checkpoints up front, so a missing or mismatched model
    // fails before any cell runs.
    std::map<std::pair<int, std::string>, Model<float>> models;
    std::map<std::string, std::string> checkpoint_digests;
    for (int s : cfg.shots) {
        for (const auto& loss : cfg.losses) {
            const std::string name = checkpoint_name(s, loss);
            const std::string path = join_path(cfg.checkpoint_dir, name);
            if (!fs::exists(path))
                throw IoError("missing checkpoint for S=" + std::to_string(s) + " loss=" + loss +
                              " (expected " + path + ")");
            Model<float> m = load_model<float>(path);
            if (!(m.desc == desc))
                throw IncompatibleError("checkpoint " + path +
                                        " was trained with a different decoder configuration");
            if (static_cast<int>(m.latents.size()) != s)
                throw IncompatibleError("checkpoint " + path + " holds " +
                                        std::to_string(m.latents.size()) + " latents, expected " +
                                        std::to_string(s));
            checkpoint_digests[name] = file_digest(path);
            models.emplace(std::make_pair(s, loss), std::move(m));
        }
    }

    const std::vector<CellSpec> cells = enumerate_cells(cfg, ds.manifest.test);
    write_sweep_manifest(cfg, cells, ds.manifest, checkpoint_digests,
                         join_path(cfg.out_dir, "manifest.json"));

    SweepOutcome out;
    out.total = cells.size();
    out.csv_path = join_path(cfg.out_dir, "results.csv");
    out.summary_path = join_path(cfg.out_dir, "summary.csv");
    if (color) out.grid_path = join_path(cfg.out_dir, "colorization_grid.png");

    CsvStore store(out.csv_path);
    {
        std::set<std::string> expected;
        for (const auto& c : cells) expected.insert(c.key());
        for (const auto& [k, line] : store.rows())
            if (!expected.count(k))
                throw ConfigError("results csv has a row that is not part of this sweep (" + k +
                                  "); the output directory belongs to a different configuration");
    }

    std::vector<const CellSpec*> jobs;
    for (const auto& c : cells)
        if (!store.has(c.key())) jobs.push_back(&c);
    if (cfg.max_cells > 0 && jobs.size() > static_cast<std::size_t>(cfg.max_cells))
        jobs.resize(static_cast<std::size_t>(cfg.max_cells));

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::size_t ran = 0;
    std::vector<std::string> failures;

    auto model_for = [&](const CellSpec& c) -> const Model<float>* {
        if (c.method != "lowshot") return nullptr;
        return &models.at(std::make_pair(c.shots, c.loss));
    };

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const CellSpec& cell = *jobs[i];
            try {
                CellOutcome res = run_cell(cell, ds.test[static_cast<std::size_t>(cell.image_index)],
                                           model_for(cell), cfg);
                if (color) save_image_png(join_path(recon_dir, recon_name(cell)), res.reconstruction);
                std::lock_guard<std::mutex> lk(mu);
                store.append(cell.key(), format_row(cell, res.psnr, res.wall_ms));
                ++ran;
                if (observer) observer(cell, res);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(mu);
                failures.push_back(cell.key() + ": " + e.what());
            }
        }
    };

    const int workers = std::max(1, std::min<int>(worker_count(cfg),
                                                  static_cast<int>(std::max<std::size_t>(jobs.size(), 1))));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    out.ran = ran;
    out.failed = failures.size();
    out.failures = std::move(failures);
    out.completed = store.size();

    if (out.completed == out.total && out.failed == 0) {
        std::vector<std::string> key_order;
        key_order.reserve(cells.size());
        for (const auto& c : cells) key_order.push_back(c.key());
        store.canonicalize(key_order);
        write_summary(out.summary_path, cells, store);
        if (color) write_grid(cfg, ds, cells, store, recon_dir, out.grid_path);
        out.finalized = true;
    }
    return out;
}

std::vector<std::string> run_pretrain_all(const RunConfig& cfg) {
    const DecoderDesc desc = config_desc(cfg);
    int max_shots = 0;
    for (int s : cfg.shots) max_shots = std::max(max_shots, s);
    if (max_shots < 1) throw ConfigError("pretraining needs at least one shot count");

    const Dataset ds = load_dataset(cfg.data_dir, cfg.resolution, max_shots, cfg.test_count);
    fs::create_directories(cfg.checkpoint_dir);

    std::vector<std::string> paths;
    nlohmann::json manifest_models = nlohmann::json::array();
    for (int s : cfg.shots) {
        for (const auto& loss : cfg.losses) {
            const std::string path = join_path(cfg.checkpoint_dir, checkpoint_name(s, loss));
            paths.push_back(path);

            DatasetManifest used = ds.manifest;
            used.shots.resize(static_cast<std::size_t>(s));
            const std::string digest = shots_digest(used);

            if (fs::exists(path)) {
                Model<float> existing = load_model<float>(path);
                if (!(existing.desc == desc))
                    throw IncompatibleError("existing checkpoint " + path +
                                            " does not match the configuration");
                nlohmann::json m;
                m["path"] = path;
                m["shots"] = s;
                m["loss"] = loss;
                m["reused"] = true;
                manifest_models.push_back(m);
                continue;
            }

            PretrainConfig pc;
            pc.loss_kind = parse_loss_kind(loss);
            pc.iterations = cfg.pretrain_iterations;
            pc.lr = cfg.pretrain_lr;
            pc.mmd_alpha = cfg.mmd_alpha;
            pc.estimator = parse_mmd_estimator(cfg.mmd_estimator);
            pc.seed = derive_seed(cfg.seed, "pretrain:S=" + std::to_string(s) + ":" + loss);

            auto result = pretrain<float>(
                std::span<const Tensor<float>>(ds.shots.data(), static_cast<std::size_t>(s)), desc, pc);

            nlohmann::json meta;
            meta["loss"] = loss;
            meta["shots"] = s;
            meta["iterations"] = cfg.pretrain_iterations;
            meta["lr"] = cfg.pretrain_lr;
            meta["seed"] = pc.seed;
            meta["shots_digest"] = digest;
            result.model.meta = meta.dump();
            save_model(path, result.model);

            nlohmann::json m;
            m["path"] = path;
            m["shots"] = s;
            m["loss"] = loss;
            m["seed"] = pc.seed;
            m["shots_digest"] = digest;
            m["final_loss"] = result.loss_history.empty() ? 0.0 : result.loss_history.back();
            manifest_models.push_back(m);
        }
    }

    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config_to_json(cfg));
    j["models"] = manifest_models;
    write_file_atomic(join_path(cfg.checkpoint_dir, "pretrain_manifest.json"), j.dump(2) + "\n");
    return paths;
}

InvertOutcome run_invert_file(const RunConfig& cfg, const std::string& image_path,
                              const std::string& checkpoint_path) {
    const DecoderDesc desc = config_desc(cfg);
    fs::create_directories(cfg.out_dir);

    Model<float> model = load_model<float>(checkpoint_path);
    if (!(model.desc == desc))
        throw IncompatibleError("checkpoint " + checkpoint_path +
                                " was trained with a different decoder configuration");

    const Tensor<float> truth = load_image(image_path, cfg.resolution);
    const Tensor<float> truth01 = unit_range(truth);

    MeasureOp<float> op = [&] {
        if (cfg.task == "colorization") return MeasureOp<float>::luma(cfg.resolution, cfg.resolution);
        const double ratio = cfg.ratios.at(0);
        const std::int64_t n = 3 * cfg.resolution * cfg.resolution;
        const std::int64_t m = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(ratio * static_cast<double>(n))));
        return MeasureOp<float>::gaussian(m, n, derive_seed(cfg.seed, "op"));
    }();

    const Measurement<float> meas =
        add_noise(op.apply(truth01), cfg.noise_std, derive_seed(cfg.seed, "noise"));
    const InversionResult<float> res =
        invert(meas.values, op, model, config_inversion(cfg, derive_seed(cfg.seed, "inv")));

    InvertOutcome out;
    out.psnr = psnr(truth01, unit_range(res.reconstruction));
    out.stage1_final = res.stage1.final_loss;
    out.stage2_final = res.stage2.final_loss;

    const std::string stem = fs::path(image_path).stem().string();
    out.reconstruction_path = join_path(cfg.out_dir, "recon_" + stem + ".png");
    save_image_png(out.reconstruction_path, res.reconstruction);

    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config_to_json(cfg));
    j["image"] = image_path;
    j["image_digest"] = file_digest(image_path);
    j["checkpoint"] = checkpoint_path;
    j["checkpoint_digest"] = file_digest(checkpoint_path);
    j["psnr"] = out.psnr;
    j["stage1_final"] = out.stage1_final;
    j["stage2_final"] = out.stage2_final;
    j["reconstruction"] = out.reconstruction_path;
    write_file_atomic(join_path(cfg.out_dir, "invert_manifest.json"), j.dump(2) + "\n");
    return out;
}

}  // namespace lowshot
