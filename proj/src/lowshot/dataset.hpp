#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowshot/tensor.hpp"

namespace lowshot {

// Image ingestion. Files are identified by content digest; ordering,
// deduplication, and the shot/test split all run off digests so a directory
// listing order never leaks into results.

struct DatasetEntry {
    std::string digest;  // sha256 hex of the file bytes
    std::string path;
};

struct DatasetManifest {
    std::int64_t resolution = 0;
    std::string recipe;                  // preprocessing description
    std::vector<DatasetEntry> test;      // first by digest order
    std::vector<DatasetEntry> shots;     // next by digest order
    std::vector<std::string> skipped;    // undecodable files
    std::vector<std::string> duplicates; // same content at another path
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Tensor<float>> shots;  // [3,R,R], values in [-1,1]
    std::vector<Tensor<float>> test;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string file_digest(const std::string& path);

// Combined digest of the shot split (content digests + recipe); stamped into
// training manifests.
std::string shots_digest(const DatasetManifest& m);

// Center-crop to square, area-resize to resolution, map bytes onto [-1,1].
Tensor<float> decode_image(const std::vector<unsigned char>& bytes, std::int64_t resolution);
Tensor<float> load_image(const std::string& path, std::int64_t resolution);

// Clamp [-1,1] data back to bytes and write a PNG.
void save_image_png(const std::string& path, const Tensor<float>& chw);

Dataset load_dataset(const std::string& dir, std::int64_t resolution, int shot_count,
                     int test_count);

}  // namespace lowshot
