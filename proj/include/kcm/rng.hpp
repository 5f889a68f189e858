#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace kcm {

// Named seeds for the independent randomness sources of a training run.
// Keeping the streams separate makes modes comparable under controlled
// experiments: changing the kernel seed must not alter batch composition.
struct SeedBundle {
    std::uint64_t init = 1;
    std::uint64_t shuffle = 2;
    std::uint64_t mixup = 3;
    std::uint64_t kernel = 4;
};

// splitmix64 mix step; used to derive auxiliary streams from a named seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// Deterministic random stream. All distributions are implemented on top of
// the raw mt19937_64 output so sequences are reproducible across platforms
// and standard-library versions.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1); safe as a log/Box-Muller input.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the spare deviate is cached.
    double normal();

    // Gamma(shape, 1) via Marsaglia-Tsang squeeze.
    double gamma(double shape);

    double beta(double a, double b);

    // Uniform index in [0, n); rejection sampling, bias-free.
    std::size_t index(std::size_t n);

    // Fisher-Yates in-place shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace kcm
