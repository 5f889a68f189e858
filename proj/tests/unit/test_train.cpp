#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "kcm/errors.hpp"
#include "kcm/train.hpp"
#include "oracles.hpp"

using namespace kcm;

namespace {

std::vector<std::uint8_t> param_bytes(const MlpParams& params) {
    std::vector<std::uint8_t> bytes;
    for (const auto& layer : params.layers) {
        const auto* w = reinterpret_cast<const std::uint8_t*>(layer.w.data());
        bytes.insert(bytes.end(), w, w + layer.w.size() * sizeof(double));
        const auto* b = reinterpret_cast<const std::uint8_t*>(layer.b.data());
        bytes.insert(bytes.end(), b, b + layer.b.size() * sizeof(double));
    }
    return bytes;
}

Dataset tiny_moons(std::size_t n, std::uint64_t seed) {
    return two_moons(n, 0.2, seed);
}

TrainConfig moon_config(Mode mode) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.epochs = 4;
    cfg.batch_size = 25;
    cfg.lr.initial = 0.05;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.kernel.bandwidth = 0.0;
    cfg.kernel_n_train = 1;
    cfg.kernel_n_eval = 1;
    cfg.mixup.force_lambda = 0.0;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("binary surrogates: hand values") {
    CHECK(binary_surrogate(SurrogateKind::logistic, Tensor::vector({0.0}), 10.0).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(binary_surrogate(SurrogateKind::logistic, Tensor::vector({100.0}), 10.0).item() <
          1e-40);
    CHECK(binary_surrogate(SurrogateKind::hinge, Tensor::vector({0.4}), 10.0).item() ==
          doctest::Approx(0.6).epsilon(1e-12));
    // the clipped variant caps phi at B
    CHECK(binary_surrogate(SurrogateKind::logistic_clipped, Tensor::vector({-100.0}), 5.0)
              .item() == 5.0);
}

TEST_CASE("multiclass surrogate: uniform logits, mixed-target linearity, gradient") {
    const std::size_t c = 7;
    std::vector<double> onehot(c, 0.0);
    onehot[3] = 1.0;
    Tensor uniform_logits = Tensor::matrix(1, c, std::vector<double>(c, 0.42));
    CHECK(surrogate_loss_multiclass(uniform_logits, Tensor::matrix(1, c, onehot)).item() ==
          doctest::Approx(std::log(double(c))).epsilon(1e-12));

    RngStream rng(4);
    std::vector<double> logits(c);
    for (double& v : logits) v = rng.normal();
    std::vector<double> t1(c, 0.0), t2(c, 0.0), mix(c, 0.0);
    t1[2] = 1.0;
    t2[5] = 1.0;
    for (std::size_t j = 0; j < c; ++j) mix[j] = 0.7 * t1[j] + 0.3 * t2[j];
    Tensor lt = Tensor::matrix(1, c, logits);
    const double mixed = surrogate_loss_multiclass(lt, Tensor::matrix(1, c, mix)).item();
    const double parts =
        0.7 * surrogate_loss_multiclass(lt, Tensor::matrix(1, c, t1)).item() +
        0.3 * surrogate_loss_multiclass(lt, Tensor::matrix(1, c, t2)).item();
    CHECK(mixed == doctest::Approx(parts).epsilon(1e-12));

    Tape tape;
    Tensor leaf = tape.leaf(lt);
    tape.backward(surrogate_loss_multiclass(leaf, Tensor::matrix(1, c, mix)));
    const std::vector<double> fd = oracle::fd_gradient(
        [&](const std::vector<double>& lv) {
            return surrogate_loss_multiclass(Tensor::matrix(1, c, lv),
                                             Tensor::matrix(1, c, mix))
                .item();
        },
        logits, 1e-6);
    CHECK(oracle::max_rel_err(leaf.grad(), fd) <= 1e-5);
}

TEST_CASE("ERM on separable data: loss strictly decreases") {
    Dataset data;
    data.n = 2;
    data.d = 1;
    data.binary = true;
    data.inputs = {-1.0, 1.0};
    data.labels = {-1, 1};
    data.split = "train";

    TrainConfig cfg;
    cfg.mode = Mode::ERM;
    cfg.epochs = 50;  // batch covers the dataset -> 50 steps... use batch 2
    cfg.batch_size = 2;
    cfg.lr.initial = 0.05;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;

    MlpParams params;
    params.layers.push_back({1, 1, {0.1}, {0.05}});

    std::vector<double> losses;
    // per-step loss recomputed on the full set before each step
    TrainConfig probe = cfg;
    probe.epochs = 1;
    MlpParams current = params;
    double prev = evaluate(current, cfg, data).risk;
    for (int step = 0; step < 100; ++step) {
        TrainResult r = train(probe, data, {}, current);
        current = r.params;
        const double now = evaluate(current, cfg, data).risk;
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("one momentum-free step is exactly -lr * gradient") {
    Dataset data = tiny_moons(32, 21);
    TrainConfig cfg;
    cfg.mode = Mode::ERM;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    cfg.lr.initial = 0.25;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;

    RngStream init(22);
    MlpParams params = make_mlp({2, 4, 1}, init);
    const MlpParams before = params;

    // independent gradient computation with the same batch order
    RngStream shuffle(cfg.seeds.shuffle);
    std::vector<std::size_t> order(data.n);
    for (std::size_t i = 0; i < data.n; ++i) order[i] = i;
    shuffle.shuffle(order);
    Batch batch = data.gather(order, 0, data.n);
    Tape tape;
    MlpVars vars = attach_params(before, tape);
    Tensor out = mlp_forward(vars, Tensor::matrix(batch.n, 2, batch.inputs));
    tape.backward(surrogate_loss_binary(cfg.loss, out, batch.targets, cfg.loss_clip));

    const TrainResult result = train(cfg, data, {}, params);
    for (std::size_t s = 0; s < before.layers.size(); ++s) {
        const auto& gw = vars.layers[s].first.grad();
        for (std::size_t i = 0; i < gw.size(); ++i) {
            const double want = before.layers[s].w[i] - cfg.lr.initial * gw[i];
            CHECK(result.params.layers[s].w[i] == want);
        }
    }
}

TEST_CASE("mode reduction: MIXUP(lambda=0) and KCM(h=0) trace ERM bit-exactly") {
    Dataset train_data = tiny_moons(100, 31);
    RngStream init(32);
    const MlpParams start = make_mlp({2, 8, 1}, init);

    auto run = [&](Mode mode) {
        TrainConfig cfg = moon_config(mode);
        std::vector<std::vector<std::uint8_t>> steps;
        TrainResult r = train(cfg, train_data, {}, start,
                              [&steps](std::size_t, const MlpParams& p) {
                                  steps.push_back(param_bytes(p));
                              });
        return steps;
    };
    const auto erm = run(Mode::ERM);
    const auto mix = run(Mode::MIXUP);
    const auto kcm = run(Mode::KCM);
    const auto both = run(Mode::MIXUP_KCM);
    REQUIRE(erm.size() == 16);  // 4 epochs x 4 batches
    CHECK(mix == erm);
    CHECK(kcm == erm);
    CHECK(both == erm);
}

TEST_CASE("kernel seed does not alter batch composition") {
    Dataset train_data = tiny_moons(64, 41);
    RngStream init(42);
    const MlpParams start = make_mlp({2, 6, 1}, init);
    auto run = [&](std::uint64_t kernel_seed, std::uint64_t mixup_seed) {
        TrainConfig cfg = moon_config(Mode::KCM);
        cfg.seeds.kernel = kernel_seed;
        cfg.seeds.mixup = mixup_seed;
        return param_bytes(train(cfg, train_data, {}, start).params);
    };
    // h = 0: offsets are zero whatever the kernel stream yields, so any
    // difference would have to come from batch composition.
    CHECK(run(1, 1) == run(999, 777));
}

TEST_CASE("non-finite loss aborts with step diagnostics") {
    Dataset data = tiny_moons(16, 51);
    TrainConfig cfg;
    cfg.mode = Mode::ERM;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.lr.initial = 1e155;  // drives weights to overflow within a few steps
    cfg.momentum = 0.0;

    RngStream init(52);
    MlpParams params = make_mlp({2, 4, 1}, init);
    try {
        train(cfg, data, {}, std::move(params));
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("metrics trace and median of the last 10 epochs") {
    Dataset train_data = tiny_moons(60, 61);
    Dataset test_data = tiny_moons(60, 62);
    TrainConfig cfg = moon_config(Mode::ERM);
    cfg.epochs = 13;
    RngStream init(63);
    TrainResult r = train(cfg, train_data, test_data, make_mlp({2, 8, 1}, init));
    REQUIRE(r.trace.size() == 13);
    for (const auto& m : r.trace) {
        CHECK(m.train_acc >= 0.0);
        CHECK(m.train_acc <= 1.0);
        CHECK(m.test_acc >= 0.0);
        CHECK(m.test_acc <= 1.0);
    }
    std::vector<double> tail;
    for (std::size_t i = r.trace.size() - 10; i < r.trace.size(); ++i) {
        tail.push_back(r.trace[i].test_acc);
    }
    CHECK(r.median_last10 == oracle::median_of(tail));
}

TEST_CASE("metrics csv is written with the pinned header") {
    Dataset train_data = tiny_moons(40, 71);
    Dataset test_data = tiny_moons(40, 72);
    TrainConfig cfg = moon_config(Mode::MIXUP);
    cfg.mixup.force_lambda.reset();
    cfg.epochs = 3;
    RngStream init(73);
    TrainResult r = train(cfg, train_data, test_data, make_mlp({2, 4, 1}, init));
    const std::string path =
        (std::filesystem::temp_directory_path() / "kcm_metrics_test.csv").string();
    write_metrics_csv(path, cfg.mode, r.trace);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,mode,train_loss,train_acc,test_acc,wall_ms");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
        CHECK(line.find("MIXUP") != std::string::npos);
    }
    CHECK(rows == 3);
    std::filesystem::remove(path);
}

TEST_CASE("evaluate: perfect and constant classifiers") {
    Dataset data;
    data.n = 4;
    data.d = 1;
    data.binary = true;
    data.inputs = {-2.0, -1.0, 1.0, 2.0};
    data.labels = {-1, -1, 1, 1};

    MlpParams perfect;
    perfect.layers.push_back({1, 1, {1.0}, {0.0}});
    TrainConfig cfg;
    cfg.mode = Mode::ERM;
    CHECK(evaluate(perfect, cfg, data).accuracy == 1.0);

    MlpParams constant;
    constant.layers.push_back({1, 1, {0.0}, {0.7}});
    CHECK(evaluate(constant, cfg, data).accuracy == 0.5);
}

TEST_CASE("sweep: ERM cell equality, grid shape, provenance columns") {
    Dataset train_data = tiny_moons(60, 81);
    Dataset test_data = tiny_moons(60, 82);
    RngStream init(83);
    const MlpParams start = make_mlp({2, 6, 1}, init);

    TrainConfig base = moon_config(Mode::ERM);
    base.epochs = 2;
    base.mixup.force_lambda.reset();

    const auto rows = sweep({0.0}, {0.0}, base, train_data, test_data, start);
    REQUIRE(rows.size() == 1);
    TrainConfig erm = base;
    erm.mode = Mode::ERM;
    const TrainResult baseline = train(erm, train_data, test_data, start);
    CHECK(rows[0].train_loss == baseline.trace.back().train_loss);

    const auto grid = sweep({0.0, 0.05, 0.5}, {0.0, 0.1, 0.3}, base, train_data,
                            test_data, start);
    CHECK(grid.size() == 9);
    const std::string path =
        (std::filesystem::temp_directory_path() / "kcm_sweep_test.csv").string();
    write_sweep_csv(path, grid);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "h,lambda,mode,epochs,batch_size,kernel_n,seed_init,seed_shuffle,seed_mixup,"
          "seed_kernel,train_loss,test_risk,test_acc");
    std::size_t count = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++count;
        // every provenance column filled
        CHECK(std::count(line.begin(), line.end(), ',') == 12);
    }
    CHECK(count == 9);
    std::filesystem::remove(path);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = TrainConfig{};
    cfg.lr.initial = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = TrainConfig{};
    cfg.mode = Mode::MIXUP;
    cfg.mixup.alpha = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = TrainConfig{};
    cfg.mode = Mode::KCM;
    cfg.kernel.bandwidth = -0.5;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("lr schedule steps at milestones") {
    LrSchedule lr;
    lr.initial = 0.1;
    lr.milestones = {3, 5};
    lr.factor = 0.1;
    CHECK(lr.at_epoch(1) == 0.1);
    CHECK(lr.at_epoch(3) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr.at_epoch(5) == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_SUITE_END();
