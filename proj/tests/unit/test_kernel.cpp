#include <doctest.h>

#include <cmath>
#include <cstring>

#include "kcm/errors.hpp"
#include "kcm/kernel.hpp"
#include "kcm/mlp.hpp"
#include "oracles.hpp"

using namespace kcm;

namespace {

MlpParams linear_model(std::vector<double> w, double b) {
    MlpParams params;
    const std::size_t d = w.size();
    params.layers.push_back({1, d, std::move(w), {b}});
    return params;
}

}  // namespace

TEST_SUITE_BEGIN("kernel");

TEST_CASE("spec and draw contracts") {
    KernelSpec bad;
    bad.bandwidth = -0.1;
    bad.dim = 2;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    KernelSpec nodim;
    nodim.bandwidth = 1.0;
    nodim.dim = 0;
    CHECK_THROWS_AS(nodim.validate(), ContractError);

    KernelSpec anti;
    anti.bandwidth = 1.0;
    anti.dim = 2;
    anti.antithetic = true;
    RngStream rng(1);
    CHECK_THROWS_AS(sample_offsets(anti, 3, rng), ContractError);
}

TEST_CASE("h = 0 draws exactly zero offsets") {
    KernelSpec spec;
    spec.bandwidth = 0.0;
    spec.dim = 3;
    RngStream rng(2);
    const OffsetBatch batch = sample_offsets(spec, 4, rng);
    for (double v : batch.offsets) CHECK(v == 0.0);
}

TEST_CASE("antithetic N=2 mirrors the first draw exactly") {
    KernelSpec spec;
    spec.bandwidth = 0.7;
    spec.dim = 3;
    spec.antithetic = true;
    RngStream rng(3);
    const OffsetBatch batch = sample_offsets(spec, 2, rng);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(batch.offsets[3 + j] == -batch.offsets[j]);
    }
}

TEST_CASE("offsets scale linearly in h under a fixed seed") {
    KernelSpec h1;
    h1.bandwidth = 1.0;
    h1.dim = 2;
    KernelSpec h2 = h1;
    h2.bandwidth = 2.0;
    RngStream a(44), b(44);
    const OffsetBatch u1 = sample_offsets(h1, 8, a);
    const OffsetBatch u2 = sample_offsets(h2, 8, b);
    for (std::size_t i = 0; i < u1.offsets.size(); ++i) {
        CHECK(u2.offsets[i] == 2.0 * u1.offsets[i]);
    }
}

TEST_CASE("empirical mean offset norm matches the chi-distribution oracle") {
    KernelSpec spec;
    spec.bandwidth = 1.0;
    spec.dim = 2;
    RngStream rng(5);
    const std::size_t n = 1000000;
    const OffsetBatch batch = sample_offsets(spec, n, rng);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = std::hypot(batch.row(i)[0], batch.row(i)[1]);
    }
    const double mean = oracle::mean_of(norms);
    const double se = oracle::stddev_of(norms) / std::sqrt(static_cast<double>(n));
    const double want = std::sqrt(M_PI / 2.0);  // E chi(2) = sqrt(pi/2)
    CHECK(std::abs(mean - want) <= 3.0 * se);
}

TEST_CASE("per-coordinate skewness vanishes (symmetric kernel)") {
    KernelSpec spec;
    spec.bandwidth = 1.0;
    spec.dim = 2;
    RngStream rng(6);
    const std::size_t n = 1000000;
    const OffsetBatch batch = sample_offsets(spec, n, rng);
    for (std::size_t j = 0; j < 2; ++j) {
        std::vector<double> coord(n);
        for (std::size_t i = 0; i < n; ++i) coord[i] = batch.row(i)[j];
        const double m = oracle::mean_of(coord);
        const double s = oracle::stddev_of(coord);
        double m3 = 0.0;
        for (double v : coord) m3 += (v - m) * (v - m) * (v - m);
        m3 /= static_cast<double>(n);
        const double skew = m3 / (s * s * s);
        // SE of sample skewness for a normal is sqrt(6/n)
        CHECK(std::abs(skew) <= 4.0 * std::sqrt(6.0 / static_cast<double>(n)));
    }
}

TEST_CASE("kernel_mean_norm closed forms") {
    KernelSpec d1;
    d1.bandwidth = 1.0;
    d1.dim = 1;
    CHECK(kernel_mean_norm(d1) == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-12));

    KernelSpec d2;
    d2.bandwidth = 0.5;
    d2.dim = 2;
    CHECK(kernel_mean_norm(d2) ==
          doctest::Approx(0.5 * std::sqrt(M_PI / 2.0)).epsilon(1e-12));

    KernelSpec zero;
    zero.bandwidth = 0.0;
    zero.dim = 4;
    CHECK(kernel_mean_norm(zero) == 0.0);

    CHECK(gaussian_unit_norm_moment(2) ==
          doctest::Approx(std::sqrt(M_PI / 2.0)).epsilon(1e-12));
}

TEST_CASE("kcm_forward: antithetic cancellation on a linear model") {
    MlpParams params = linear_model({1.0, 2.0}, 0.5);
    KernelSpec spec;
    spec.bandwidth = 0.8;
    spec.dim = 2;
    spec.antithetic = true;
    RngStream rng(7);
    const OffsetBatch offsets = sample_offsets(spec, 10, rng);
    Tensor x = Tensor::matrix(1, 2, {0.3, -0.1});
    Tensor out = kcm_forward(
        [&params](const Tensor& in) { return mlp_forward(params, in); }, x, offsets);
    CHECK(std::abs(out.item() - 0.6) <= 1e-12);
}

TEST_CASE("kcm_forward: N=1 zero offset reproduces f bit-exactly") {
    RngStream init(8);
    MlpParams params = make_mlp({2, 6, 1}, init);
    KernelSpec spec;
    spec.bandwidth = 0.0;
    spec.dim = 2;
    RngStream rng(9);
    const OffsetBatch offsets = sample_offsets(spec, 1, rng);
    Tensor x = Tensor::matrix(3, 2, {0.1, 0.2, -0.4, 0.9, 1.5, -2.0});
    Tensor conv = kcm_forward(
        [&params](const Tensor& in) { return mlp_forward(params, in); }, x, offsets);
    Tensor raw = mlp_forward(params, x);
    CHECK(std::memcmp(conv.values().data(), raw.values().data(),
                      raw.size() * sizeof(double)) == 0);
}

TEST_CASE("kcm_forward deviation obeys the Lipschitz bound") {
    RngStream init(10);
    MlpParams params = make_mlp({2, 16, 16, 1}, init);
    const double lip = lipschitz_upper_bound(params);
    KernelSpec spec;
    spec.bandwidth = 0.3;
    spec.dim = 2;
    RngStream rng(11);
    const OffsetBatch offsets = sample_offsets(spec, 8, rng);
    const double radius = offsets.max_row_norm();
    RngStream xs(12);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> xv{2.0 * xs.normal(), 2.0 * xs.normal()};
        Tensor x = Tensor::matrix(1, 2, xv);
        const double conv =
            kcm_forward([&params](const Tensor& in) { return mlp_forward(params, in); },
                        x, offsets)
                .item();
        const double raw = mlp_forward(params, x).item();
        CHECK(std::abs(conv - raw) <= lip * radius * (1.0 + 1e-9) + 1e-12);
    }
}

TEST_CASE("kcm_predict: sign rule and degenerate bandwidth") {
    MlpParams params = linear_model({1.0, 2.0}, 0.5);
    KernelSpec spec;
    spec.bandwidth = 0.0;
    spec.dim = 2;
    RngStream rng(13);
    Tensor x = Tensor::matrix(1, 2, {0.3, -0.1});  // f(x) = 0.6
    CHECK(kcm_predict(params, spec, 4, x, rng) == std::vector<int>{1});

    RngStream init(14);
    MlpParams mlp = make_mlp({2, 8, 1}, init);
    RngStream xs(15);
    std::vector<double> grid(40);
    for (double& v : grid) v = xs.normal();
    Tensor xg = Tensor::matrix(20, 2, grid);
    RngStream rng2(16);
    const std::vector<int> conv_labels = kcm_predict(mlp, spec, 4, xg, rng2);
    const std::vector<int> raw_labels = labels_of(mlp_forward(mlp, xg));
    CHECK(conv_labels == raw_labels);
}

TEST_CASE("Monte Carlo estimator: unbiasedness across batch sizes") {
    RngStream init(20);
    MlpParams params = make_mlp({2, 12, 1}, init);
    KernelSpec spec;
    spec.bandwidth = 0.5;
    spec.dim = 2;
    Tensor x = Tensor::matrix(1, 2, {0.25, -0.4});
    auto estimate = [&](std::size_t n_draws, RngStream& rng) {
        return kcm_values(params, spec, n_draws, x, rng).item();
    };

    RngStream rng(21);
    const std::size_t m_single = 10000;
    std::vector<double> singles(m_single);
    for (auto& v : singles) v = estimate(1, rng);
    std::vector<double> tens(m_single / 10);
    for (auto& v : tens) v = estimate(10, rng);

    const double mean1 = oracle::mean_of(singles);
    const double se1 = oracle::stddev_of(singles) / std::sqrt(double(m_single));
    const double mean10 = oracle::mean_of(tens);
    const double se10 = oracle::stddev_of(tens) / std::sqrt(double(m_single / 10));
    CHECK(std::abs(mean1 - mean10) <= 3.0 * std::hypot(se1, se10));
}

TEST_CASE("Monte Carlo estimator: std dev scales like N^{-1/2}") {
    RngStream init(22);
    MlpParams params = make_mlp({2, 12, 1}, init);
    KernelSpec spec;
    spec.bandwidth = 0.5;
    spec.dim = 2;
    Tensor x = Tensor::matrix(1, 2, {0.25, -0.4});
    RngStream rng(23);
    const std::vector<std::size_t> ns{1, 4, 16, 64};
    std::vector<double> log_n, log_sd;
    for (std::size_t n_draws : ns) {
        std::vector<double> vals(2000);
        for (auto& v : vals) v = kcm_values(params, spec, n_draws, x, rng).item();
        log_n.push_back(std::log(double(n_draws)));
        log_sd.push_back(std::log(oracle::stddev_of(vals)));
    }
    // least squares slope
    const double mx = oracle::mean_of(log_n), my = oracle::mean_of(log_sd);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
        sxx += (log_n[i] - mx) * (log_n[i] - mx);
        sxy += (log_n[i] - mx) * (log_sd[i] - my);
    }
    const double slope = sxy / sxx;
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
}

TEST_CASE("shape mismatch raises") {
    MlpParams params = linear_model({1.0, 2.0}, 0.0);
    KernelSpec spec;
    spec.bandwidth = 0.1;
    spec.dim = 3;
    RngStream rng(30);
    const OffsetBatch offsets = sample_offsets(spec, 2, rng);
    Tensor x = Tensor::matrix(1, 2, {1.0, 2.0});
    CHECK_THROWS_AS(kcm_forward([&params](const Tensor& in) {
                        return mlp_forward(params, in);
                    }, x, offsets),
                    ShapeError);
}

TEST_SUITE_END();
