#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kcm/mixup.hpp"
#include "kcm/rng.hpp"
#include "kcm/tensor.hpp"

namespace kcm {

// In-memory dataset. Binary labels live on {-1,+1}; multi-class labels are
// 0..C-1. Normalization may be applied at most once and its per-coordinate
// record travels with the dataset.
struct Dataset {
    std::size_t n = 0;
    std::size_t d = 0;
    int num_classes = 2;
    bool binary = true;
    std::string split;  // "train" or "test"
    std::vector<double> inputs;  // n x d
    std::vector<int> labels;
    bool normalized = false;
    std::vector<double> norm_mean;   // per coordinate, empty until normalized
    std::vector<double> norm_scale;

    void validate() const;
    Tensor input_tensor() const;
    // Rows idx as a training batch; one-hot targets for multi-class.
    Batch gather(const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t count) const;
    std::vector<double> row(std::size_t i) const;
};

// Two interleaving half-circles: ceil(n/2) points on (cos t, sin t) labeled
// -1 and floor(n/2) points on (1 - cos t, 0.5 - sin t) labeled +1, t
// equispaced over [0, pi], plus isotropic Gaussian noise.
Dataset two_moons(std::size_t n, double noise, std::uint64_t seed);

// CIFAR-10 binary layout: 3073-byte records, 1 label byte + 3072 channel-major
// pixels. Pixels are scaled to [0,1]; normalization is a separate step.
Dataset cifar10_read(const std::vector<std::string>& files, const std::string& split);
// CIFAR-100 variant: 3074-byte records with a coarse+fine label header; the
// fine label is used.
Dataset cifar100_read(const std::vector<std::string>& files, const std::string& split);

// Per-channel mean/std computed over `stats_source`, expanded to a
// per-coordinate record and applied to `ds`. Throws if already normalized.
void normalize_like(Dataset& ds, const Dataset& stats_source, std::size_t channels);
// Apply a stored record directly (e.g. from a checkpoint).
void apply_normalization(Dataset& ds, const std::vector<double>& mean,
                         const std::vector<double>& scale);

// Horizontal flip / padded random crop for channel-major 3x32x32 rows;
// operates on a gathered batch in place.
void augment_batch(Batch& batch, bool flip, bool crop, std::size_t pad, RngStream& rng);

// Class-structured synthetic data in the exact CIFAR-10 binary layout; a
// stand-in corpus for pipeline runs when the real binaries are absent.
void write_synthetic_cifar10(const std::string& path, std::size_t records,
                             std::uint64_t seed);

}  // namespace kcm
