#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowshot/decoder.hpp"

namespace lowshot {

// Gradient verification against central finite differences, run in double
// precision. Checks random directional derivatives over the whole (θ, z)
// vector plus per-coordinate differences on every latent coordinate and a
// sample of weight coordinates.
struct GradCheckConfig {
    DecoderDesc desc{16, 32, 3, 128, 1e-5};
    int points = 5;           // random (θ, z) evaluation points per objective
    int directions = 8;       // random unit directions per point
    int sampled_coords = 160; // weight coordinates sampled per point
    double step = 1e-4;  // initial step; probes shrink it while the quotient disagrees
    double tol = 1e-3;
    int shots = 3;            // set size for the set-level objectives
    double cs_ratio = 0.1;
    std::uint64_t seed = 1;
};

struct GradCheckCase {
    std::string objective;
    int point = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    double max_rel_err = 0.0;
    bool pass = false;
};

GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

}  // namespace lowshot
