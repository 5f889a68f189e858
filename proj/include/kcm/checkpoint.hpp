#pragma once

#include <string>
#include <vector>

#include "kcm/mlp.hpp"
#include "kcm/rng.hpp"

namespace kcm {

// Binary checkpoint, little-endian throughout:
//   magic "KCMCKPT1" (8 bytes)
//   version        u32 (currently 1)
//   layer_count    u32
//   per layer: rows u32, cols u32, rows*cols f64 weights, rows f64 biases
//   seed bundle: init, shuffle, mixup, kernel as u64
//   norm_dim       u32 (0 when no normalization record)
//   per coordinate: mean f64, scale f64
struct Checkpoint {
    MlpParams params;
    SeedBundle seeds;
    std::vector<double> norm_mean;
    std::vector<double> norm_scale;
};

// Writes to <path>.tmp then renames, so readers never observe a torn file.
void checkpoint_save(const Checkpoint& ckpt, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

}  // namespace kcm
