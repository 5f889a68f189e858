#include "kcm/mixup.hpp"

#include <algorithm>
#include <numeric>

#include "kcm/errors.hpp"

namespace kcm {

void MixupConfig::validate() const {
    if (!(alpha > 0.0)) throw ContractError("MixupConfig: alpha must be positive");
    if (force_lambda && !(*force_lambda >= 0.0 && *force_lambda <= 1.0)) {
        throw ContractError("MixupConfig: forced lambda must lie in [0,1]");
    }
}

std::vector<double> sample_lambdas(const MixupConfig& cfg, std::size_t n, RngStream& rng) {
    cfg.validate();
    if (n < 1) throw ContractError("sample_lambdas: n must be >= 1");
    std::vector<double> lambdas(n);
    if (cfg.force_lambda) {
        std::fill(lambdas.begin(), lambdas.end(), *cfg.force_lambda);
        return lambdas;
    }
    if (cfg.per_example) {
        for (double& l : lambdas) l = rng.beta(cfg.alpha, cfg.alpha);
    } else {
        std::fill(lambdas.begin(), lambdas.end(), rng.beta(cfg.alpha, cfg.alpha));
    }
    if (cfg.min_trick) {
        for (double& l : lambdas) l = std::min(l, 1.0 - l);
    }
    return lambdas;
}

MixedBatch mix_batch(const Batch& batch, const std::vector<double>& lambdas,
                     RngStream& rng) {
    if (batch.n == 0) throw ContractError("mix_batch: empty batch");
    if (lambdas.size() != batch.n) {
        throw ContractError("mix_batch: lambda count does not match batch size");
    }
    MixedBatch mixed;
    mixed.n = batch.n;
    mixed.d = batch.d;
    mixed.target_width = batch.target_width;
    mixed.lambdas = lambdas;
    mixed.partner.resize(batch.n);
    std::iota(mixed.partner.begin(), mixed.partner.end(), std::size_t{0});
    rng.shuffle(mixed.partner);

    mixed.inputs.resize(batch.inputs.size());
    mixed.targets.resize(batch.targets.size());
    const std::size_t d = batch.d;
    const std::size_t w = batch.target_width;
    for (std::size_t j = 0; j < batch.n; ++j) {
        const std::size_t p = mixed.partner[j];
        const double lam = lambdas[j];
        const double keep = 1.0 - lam;
        for (std::size_t k = 0; k < d; ++k) {
            mixed.inputs[j * d + k] =
                keep * batch.inputs[j * d + k] + lam * batch.inputs[p * d + k];
        }
        for (std::size_t k = 0; k < w; ++k) {
            mixed.targets[j * w + k] =
                keep * batch.targets[j * w + k] + lam * batch.targets[p * w + k];
        }
    }
    return mixed;
}

}  // namespace kcm
