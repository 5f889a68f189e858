#include "kcm/rng.hpp"

#include <cmath>

#include "kcm/errors.hpp"

namespace kcm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double RngStream::gamma(double shape) {
    if (!(shape > 0.0)) {
        throw ContractError("gamma: shape must be positive");
    }
    if (shape < 1.0) {
        // Boost via Gamma(shape+1) and a uniform power.
        const double g = gamma(shape + 1.0);
        const double u = uniform_open();
        return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

double RngStream::beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw ContractError("beta: parameters must be positive");
    }
    const double x = gamma(a);
    const double y = gamma(b);
    const double s = x + y;
    if (s == 0.0) {
        // Both gammas underflowed; the mass sits at the endpoints.
        return uniform() < 0.5 ? 0.0 : 1.0;
    }
    return x / s;
}

std::size_t RngStream::index(std::size_t n) {
    if (n == 0) {
        throw ContractError("index: n must be positive");
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x < limit) {
            return static_cast<std::size_t>(x % bound);
        }
    }
}

}  // namespace kcm
