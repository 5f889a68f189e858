#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kcm/errors.hpp"
#include "kcm/mixup.hpp"
#include "oracles.hpp"

using namespace kcm;

TEST_SUITE_BEGIN("mixup");

TEST_CASE("min trick maps raw draws to min(lambda, 1-lambda)") {
    MixupConfig raw_cfg;
    raw_cfg.alpha = 1.0;
    raw_cfg.min_trick = false;
    MixupConfig trick_cfg = raw_cfg;
    trick_cfg.min_trick = true;

    RngStream a(77), b(77);
    const std::vector<double> raw = sample_lambdas(raw_cfg, 64, a);
    const std::vector<double> tricked = sample_lambdas(trick_cfg, 64, b);
    bool saw_fold = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(tricked[i] == std::min(raw[i], 1.0 - raw[i]));
        CHECK(tricked[i] <= 0.5);
        if (raw[i] > 0.5) saw_fold = true;
    }
    CHECK(saw_fold);  // e.g. a raw 0.8 became 0.2
}

TEST_CASE("alpha=1 min-tricked mean is 1/4") {
    MixupConfig cfg;
    cfg.alpha = 1.0;
    RngStream rng(101);
    const std::vector<double> lams = sample_lambdas(cfg, 1000000, rng);
    const double mean = oracle::mean_of(lams);
    const double se = oracle::stddev_of(lams) / std::sqrt(double(lams.size()));
    CHECK(std::abs(mean - 0.25) <= 3.0 * se);
}

TEST_CASE("alpha=0.05 concentrates at zero (Beta quantile oracle values)") {
    // Oracle facts for min-tricked Beta(0.05, 0.05):
    //   P(lambda <= 0.05) = 2 I_0.05(0.05, 0.05) = 0.8662036
    //   median = 8.83e-7
    MixupConfig cfg;
    cfg.alpha = 0.05;
    RngStream rng(102);
    std::vector<double> lams = sample_lambdas(cfg, 100000, rng);
    double below = 0.0;
    for (double l : lams) below += l <= 0.05;
    const double frac = below / double(lams.size());
    const double p = 0.8662036160391723;
    const double se = std::sqrt(p * (1.0 - p) / double(lams.size()));
    CHECK(std::abs(frac - p) <= 3.0 * se);
    CHECK(oracle::median_of(lams) < 1e-4);
}

TEST_CASE("invalid alpha rejected") {
    MixupConfig cfg;
    cfg.alpha = 0.0;
    RngStream rng(1);
    CHECK_THROWS_AS(sample_lambdas(cfg, 4, rng), ContractError);
}

TEST_CASE("forced lambda fills without consuming draws") {
    MixupConfig cfg;
    cfg.force_lambda = 0.125;
    RngStream rng(5);
    const std::vector<double> lams = sample_lambdas(cfg, 8, rng);
    for (double l : lams) CHECK(l == 0.125);
}

TEST_CASE("per-batch lambda broadcasts one draw") {
    MixupConfig cfg;
    cfg.per_example = false;
    cfg.min_trick = false;
    RngStream rng(6);
    const std::vector<double> lams = sample_lambdas(cfg, 16, rng);
    for (double l : lams) CHECK(l == lams.front());
}

TEST_CASE("mix_batch hand case") {
    Batch batch;
    batch.n = 2;
    batch.d = 2;
    batch.target_width = 1;
    batch.inputs = {0.0, 0.0, 1.0, 1.0};
    batch.targets = {-1.0, 1.0};
    // find a seed whose permutation swaps the pair
    for (std::uint64_t seed = 0;; ++seed) {
        RngStream rng(seed);
        MixedBatch mixed = mix_batch(batch, {0.25, 0.25}, rng);
        if (mixed.partner[0] == 1) {
            CHECK(mixed.inputs[0] == doctest::Approx(0.25).epsilon(1e-15));
            CHECK(mixed.inputs[1] == doctest::Approx(0.25).epsilon(1e-15));
            CHECK(mixed.targets[0] == doctest::Approx(-0.5).epsilon(1e-15));
            break;
        }
        REQUIRE(seed < 64);
    }
}

TEST_CASE("lambda = 0 reproduces the batch bit-exactly") {
    Batch batch;
    batch.n = 5;
    batch.d = 3;
    batch.target_width = 1;
    RngStream rng(7);
    batch.inputs.resize(15);
    batch.targets.resize(5);
    for (double& v : batch.inputs) v = rng.normal();
    for (double& v : batch.targets) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    RngStream mix_rng(8);
    const MixedBatch mixed = mix_batch(batch, std::vector<double>(5, 0.0), mix_rng);
    CHECK(mixed.inputs == batch.inputs);
    CHECK(mixed.targets == batch.targets);
}

TEST_CASE("multi-class targets mix one-hot rows") {
    Batch batch;
    batch.n = 2;
    batch.d = 1;
    batch.target_width = 6;
    batch.inputs = {0.0, 1.0};
    batch.targets.assign(12, 0.0);
    batch.targets[0 * 6 + 2] = 1.0;  // class 2
    batch.targets[1 * 6 + 5] = 1.0;  // class 5
    for (std::uint64_t seed = 0;; ++seed) {
        RngStream rng(seed);
        MixedBatch mixed = mix_batch(batch, {0.3, 0.3}, rng);
        if (mixed.partner[0] == 1) {
            CHECK(mixed.targets[2] == doctest::Approx(0.7).epsilon(1e-15));
            CHECK(mixed.targets[5] == doctest::Approx(0.3).epsilon(1e-15));
            break;
        }
        REQUIRE(seed < 64);
    }
}

TEST_CASE("contract errors") {
    Batch empty;
    RngStream rng(1);
    CHECK_THROWS_AS(mix_batch(empty, {}, rng), ContractError);

    Batch batch;
    batch.n = 2;
    batch.d = 1;
    batch.inputs = {0.0, 1.0};
    batch.targets = {-1.0, 1.0};
    CHECK_THROWS_AS(mix_batch(batch, {0.5}, rng), ContractError);
}

TEST_CASE("pairing is a permutation") {
    RngStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Batch batch;
        batch.n = 1 + rng.index(40);
        batch.d = 2;
        batch.target_width = 1;
        batch.inputs.assign(batch.n * 2, 0.0);
        batch.targets.assign(batch.n, 1.0);
        const MixedBatch mixed =
            mix_batch(batch, std::vector<double>(batch.n, 0.1), rng);
        std::vector<std::size_t> sorted = mixed.partner;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::size_t> want(batch.n);
        std::iota(want.begin(), want.end(), std::size_t{0});
        CHECK(sorted == want);
    }
}

TEST_CASE("min-tricked Beta(1,1) matches F(t)=2t by Kolmogorov-Smirnov") {
    MixupConfig cfg;
    cfg.alpha = 1.0;
    RngStream rng(103);
    std::vector<double> lams = sample_lambdas(cfg, 100000, rng);
    const double d = oracle::ks_statistic(
        lams, [](double t) { return std::clamp(2.0 * t, 0.0, 1.0); });
    CHECK(d < 1.63 / std::sqrt(double(lams.size())));  // 1% critical value
}

TEST_SUITE_END();
