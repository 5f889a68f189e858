#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "kcm/rng.hpp"

namespace kcm {

// Beta(alpha, alpha) interpolation policy. min_trick maps every draw to
// min{lambda, 1-lambda} so interpolation stays closer to the first parent.
// force_lambda pins the weight to a constant (sweep probes, reduction tests).
struct MixupConfig {
    double alpha = 1.0;
    bool per_example = true;
    bool min_trick = true;
    std::optional<double> force_lambda;

    void validate() const;
};

// A minibatch in training layout. Binary problems carry width-1 targets on
// {-1,+1}; multi-class problems carry one-hot rows (width = #classes).
struct Batch {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t target_width = 1;
    std::vector<double> inputs;   // n x d
    std::vector<double> targets;  // n x target_width
};

struct MixedBatch {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t target_width = 1;
    std::vector<double> inputs;
    std::vector<double> targets;
    std::vector<std::size_t> partner;  // pairing permutation
    std::vector<double> lambdas;
};

std::vector<double> sample_lambdas(const MixupConfig& cfg, std::size_t n, RngStream& rng);

// Pairs element j with element partner[j] from a uniformly random permutation
// and interpolates inputs and targets with lambda[j].
MixedBatch mix_batch(const Batch& batch, const std::vector<double>& lambdas,
                     RngStream& rng);

}  // namespace kcm
