#include "lowshot/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace lowshot {

namespace fs = std::filesystem;

std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    if (EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr) != 1)
        throw IoError("digest computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
}

bool image_extension(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ".png" || e == ".jpg" || e == ".jpeg";
}

const char* kRecipe = "center-crop square, area resize, x/127.5 - 1";

}  // namespace

std::string file_digest(const std::string& path) {
    const auto bytes = read_bytes(path);
    return sha256_hex(bytes.data(), bytes.size());
}

std::string shots_digest(const DatasetManifest& m) {
    std::string acc = m.recipe + ":" + std::to_string(m.resolution);
    for (const auto& e : m.shots) acc += ":" + e.digest;
    return sha256_hex(acc.data(), acc.size());
}

Tensor<float> decode_image(const std::vector<unsigned char>& bytes, std::int64_t resolution) {
    if (resolution < 1) throw ConfigError("resolution must be positive");
    cv::Mat raw = cv::imdecode(cv::Mat(1, static_cast<int>(bytes.size()), CV_8UC1,
                                       const_cast<unsigned char*>(bytes.data())),
                               cv::IMREAD_COLOR);
    if (raw.empty()) throw IoError("undecodable image data");

    const int side = std::min(raw.rows, raw.cols);
    const int y0 = (raw.rows - side) / 2;
    const int x0 = (raw.cols - side) / 2;
    cv::Mat cropped = raw(cv::Rect(x0, y0, side, side));
    cv::Mat resized;
    cv::resize(cropped, resized, cv::Size(static_cast<int>(resolution), static_cast<int>(resolution)),
               0, 0, cv::INTER_AREA);

    const std::int64_t r = resolution;
    Tensor<float> out = Tensor<float>::zeros({3, r, r});
    for (std::int64_t y = 0; y < r; ++y) {
        const cv::Vec3b* row = resized.ptr<cv::Vec3b>(static_cast<int>(y));
        for (std::int64_t x = 0; x < r; ++x) {
            const cv::Vec3b bgr = row[x];
            out[0 * r * r + y * r + x] = static_cast<float>(bgr[2]) / 127.5f - 1.0f;
            out[1 * r * r + y * r + x] = static_cast<float>(bgr[1]) / 127.5f - 1.0f;
            out[2 * r * r + y * r + x] = static_cast<float>(bgr[0]) / 127.5f - 1.0f;
        }
    }
    return out;
}

Tensor<float> load_image(const std::string& path, std::int64_t resolution) {
    try {
        return decode_image(read_bytes(path), resolution);
    } catch (const IoError& e) {
        throw IoError(path + ": " + error_detail(e));
    }
}

void save_image_png(const std::string& path, const Tensor<float>& chw) {
    if (chw.rank() != 3 || chw.shape[0] != 3)
        throw ShapeError("png writer expects [3,H,W], got " + shape_str(chw.shape));
    const std::int64_t h = chw.shape[1], w = chw.shape[2];
    cv::Mat img(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
    for (std::int64_t y = 0; y < h; ++y) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
        for (std::int64_t x = 0; x < w; ++x) {
            auto level = [&](std::int64_t c) {
                const float v = (chw[c * h * w + y * w + x] + 1.0f) * 127.5f;
                return static_cast<unsigned char>(std::clamp(std::lround(v), 0l, 255l));
            };
            row[x] = cv::Vec3b(level(2), level(1), level(0));  // BGR
        }
    }
    if (!cv::imwrite(path, img)) throw IoError("cannot write " + path);
}

Dataset load_dataset(const std::string& dir, std::int64_t resolution, int shot_count,
                     int test_count) {
    if (shot_count < 0 || test_count < 0) throw ConfigError("negative split counts");
    if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");

    struct Candidate {
        std::string digest;
        std::string path;
        std::vector<unsigned char> bytes;
    };
    std::vector<Candidate> candidates;
    DatasetManifest manifest;
    manifest.resolution = resolution;
    manifest.recipe = kRecipe;

    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && image_extension(entry.path()))
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw ConfigError("no image files in " + dir);

    std::unordered_set<std::string> seen;
    for (const auto& p : paths) {
        auto bytes = read_bytes(p);
        std::string digest = sha256_hex(bytes.data(), bytes.size());
        if (!seen.insert(digest).second) {
            manifest.duplicates.push_back(p);
            continue;
        }
        candidates.push_back({std::move(digest), p, std::move(bytes)});
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.digest < b.digest; });

    Dataset ds;
    int taken_test = 0, taken_shots = 0;
    for (auto& c : candidates) {
        if (taken_test >= test_count && taken_shots >= shot_count) break;
        Tensor<float> img;
        try {
            img = decode_image(c.bytes, resolution);
        } catch (const IoError&) {
            manifest.skipped.push_back(c.path);
            continue;
        }
        if (taken_test < test_count) {
            manifest.test.push_back({c.digest, c.path});
            ds.test.push_back(std::move(img));
            ++taken_test;
        } else {
            manifest.shots.push_back({c.digest, c.path});
            ds.shots.push_back(std::move(img));
            ++taken_shots;
        }
    }
    if (taken_test < test_count || taken_shots < shot_count)
        throw ConfigError("dataset has " + std::to_string(taken_test + taken_shots) +
                          " usable images, need " + std::to_string(test_count) + " test + " +
                          std::to_string(shot_count) + " shots");
    ds.manifest = std::move(manifest);
    return ds;
}

}  // namespace lowshot
