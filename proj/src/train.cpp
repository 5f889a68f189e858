#include "kcm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kcm/errors.hpp"

namespace kcm {

Mode mode_from_string(const std::string& s) {
    if (s == "ERM") return Mode::ERM;
    if (s == "MIXUP") return Mode::MIXUP;
    if (s == "KCM") return Mode::KCM;
    if (s == "MIXUP_KCM") return Mode::MIXUP_KCM;
    throw ConfigError("unknown mode '" + s + "' (ERM, MIXUP, KCM, MIXUP_KCM)");
}

std::string mode_to_string(Mode mode) {
    switch (mode) {
        case Mode::ERM: return "ERM";
        case Mode::MIXUP: return "MIXUP";
        case Mode::KCM: return "KCM";
        case Mode::MIXUP_KCM: return "MIXUP_KCM";
    }
    return "?";
}

bool mode_uses_mixup(Mode mode) {
    return mode == Mode::MIXUP || mode == Mode::MIXUP_KCM;
}

bool mode_uses_kcm(Mode mode) {
    return mode == Mode::KCM || mode == Mode::MIXUP_KCM;
}

SurrogateKind surrogate_from_string(const std::string& s) {
    if (s == "logistic") return SurrogateKind::logistic;
    if (s == "hinge") return SurrogateKind::hinge;
    if (s == "logistic_clipped") return SurrogateKind::logistic_clipped;
    throw ConfigError("unknown surrogate loss '" + s + "'");
}

Tensor binary_surrogate(SurrogateKind kind, const Tensor& margins, double clip_b) {
    switch (kind) {
        case SurrogateKind::logistic:
            return mean(logistic_loss(margins));
        case SurrogateKind::hinge:
            return mean(hinge_loss(margins));
        case SurrogateKind::logistic_clipped:
            return mean(clamp_max(logistic_loss(margins), clip_b));
    }
    throw ContractError("binary_surrogate: bad kind");
}

Tensor surrogate_loss_binary(SurrogateKind kind, const Tensor& outputs,
                             const std::vector<double>& targets, double clip_b) {
    Tensor y = Tensor::vector(targets);
    Tensor margins = mul(y, flatten(outputs));
    return binary_surrogate(kind, margins, clip_b);
}

Tensor surrogate_loss_multiclass(const Tensor& logits, const Tensor& targets) {
    return mean(softmax_cross_entropy(logits, targets));
}

double LrSchedule::at_epoch(std::size_t epoch) const {
    double rate = initial;
    for (std::size_t m : milestones) {
        if (epoch >= m) rate *= factor;
    }
    return rate;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ContractError("TrainConfig: batch size must be >= 1");
    if (!(lr.initial > 0.0)) throw ContractError("TrainConfig: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ContractError("TrainConfig: momentum must lie in [0,1)");
    }
    if (weight_decay < 0.0) throw ContractError("TrainConfig: weight decay must be >= 0");
    if (mode_uses_mixup(mode)) mixup.validate();
    if (mode_uses_kcm(mode)) {
        // kernel.dim is resolved against the dataset at train/eval time
        if (!(kernel.bandwidth >= 0.0)) {
            throw ContractError("TrainConfig: kernel bandwidth must be >= 0");
        }
        if (kernel_n_train < 1) throw ContractError("TrainConfig: kernel N must be >= 1");
        if (kernel_n_eval < 1) throw ContractError("TrainConfig: eval N must be >= 1");
    }
}

namespace {

struct SgdState {
    std::vector<std::vector<double>> vw, vb;

    explicit SgdState(const MlpParams& params) {
        for (const auto& layer : params.layers) {
            vw.emplace_back(layer.w.size(), 0.0);
            vb.emplace_back(layer.b.size(), 0.0);
        }
    }
};

// v = momentum*v + (g + wd*w); w -= lr*v
void sgd_step(MlpParams& params, const MlpVars& vars, SgdState& state, double lr,
              double momentum, double weight_decay) {
    for (std::size_t s = 0; s < params.layers.size(); ++s) {
        auto& layer = params.layers[s];
        const auto& gw = vars.layers[s].first.grad();
        const auto& gb = vars.layers[s].second.grad();
        for (std::size_t i = 0; i < layer.w.size(); ++i) {
            const double g = gw[i] + weight_decay * layer.w[i];
            state.vw[s][i] = momentum * state.vw[s][i] + g;
            layer.w[i] -= lr * state.vw[s][i];
        }
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
            const double g = gb[i] + weight_decay * layer.b[i];
            state.vb[s][i] = momentum * state.vb[s][i] + g;
            layer.b[i] -= lr * state.vb[s][i];
        }
    }
}

double param_norm(const MlpParams& params) {
    double acc = 0.0;
    for (const auto& layer : params.layers) {
        for (double v : layer.w) acc += v * v;
        for (double v : layer.b) acc += v * v;
    }
    return std::sqrt(acc);
}

// Accuracy of batch outputs against the dominant-parent labels. With the
// min-trick every lambda <= 0.5, so the first parent dominates the mixture.
double batch_accuracy(const Tensor& outputs, const Batch& batch) {
    const std::vector<int> pred = labels_of(outputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < batch.n; ++i) {
        if (batch.target_width == 1) {
            const int want = batch.targets[i] >= 0.0 ? 1 : -1;
            hits += pred[i] == want;
        } else {
            std::size_t want = 0;
            for (std::size_t c = 1; c < batch.target_width; ++c) {
                if (batch.targets[i * batch.target_width + c] >
                    batch.targets[i * batch.target_width + want]) {
                    want = c;
                }
            }
            hits += pred[i] == static_cast<int>(want);
        }
    }
    return static_cast<double>(hits) / static_cast<double>(batch.n);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset& test_data, MlpParams params,
                  const StepObserver& observer) {
    cfg.validate();
    if (train_data.n == 0) throw ContractError("train: empty dataset");
    params.validate();

    RngStream shuffle_rng(cfg.seeds.shuffle);
    RngStream mixup_rng(cfg.seeds.mixup);
    RngStream kernel_rng(cfg.seeds.kernel);
    RngStream augment_rng(derive_seed(cfg.seeds.shuffle, 0x617567));

    const bool use_mixup = mode_uses_mixup(cfg.mode);
    const bool use_kcm = mode_uses_kcm(cfg.mode);
    const bool binary = train_data.binary;

    KernelSpec spec = cfg.kernel;
    spec.dim = train_data.d;

    SgdState sgd(params);
    TrainResult result;
    std::vector<std::size_t> order(train_data.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.lr.at_epoch(epoch);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0, acc_sum = 0.0;
        std::size_t batches = 0;

        for (std::size_t begin = 0; begin < train_data.n; begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, train_data.n - begin);
            ++step;
            Batch batch = train_data.gather(order, begin, count);
            if (cfg.augment_flip || cfg.augment_crop) {
                augment_batch(batch, cfg.augment_flip, cfg.augment_crop, cfg.augment_pad,
                              augment_rng);
            }

            std::vector<double> targets = batch.targets;
            std::vector<double> inputs = batch.inputs;
            if (use_mixup) {
                const std::vector<double> lambdas =
                    sample_lambdas(cfg.mixup, count, mixup_rng);
                MixedBatch mixed = mix_batch(batch, lambdas, mixup_rng);
                inputs = std::move(mixed.inputs);
                targets = std::move(mixed.targets);
            }

            Tape tape;
            MlpVars vars = attach_params(params, tape);
            Tensor x = Tensor::matrix(count, batch.d, inputs);
            Tensor out;
            if (use_kcm) {
                const OffsetBatch offsets =
                    sample_offsets(spec, cfg.kernel_n_train, kernel_rng);
                out = kcm_forward(
                    [&vars](const Tensor& in) { return mlp_forward(vars, in); }, x,
                    offsets);
            } else {
                out = mlp_forward(vars, x);
            }

            Tensor loss;
            if (binary) {
                loss = surrogate_loss_binary(cfg.loss, out, targets, cfg.loss_clip);
            } else {
                Tensor t = Tensor::matrix(count, batch.target_width, targets);
                loss = surrogate_loss_multiclass(out, t);
            }
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                std::ostringstream diag;
                diag << "train: non-finite loss at step " << step << " (epoch " << epoch
                     << ", lr " << lr << ", |params| " << param_norm(params) << ")";
                throw TrainError(diag.str());
            }
            tape.backward(loss);
            sgd_step(params, vars, sgd, lr, cfg.momentum, cfg.weight_decay);

            loss_sum += loss_value;
            acc_sum += batch_accuracy(out, batch);
            ++batches;
            if (observer) observer(step, params);
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.train_loss = loss_sum / static_cast<double>(batches);
        metrics.train_acc = acc_sum / static_cast<double>(batches);
        metrics.test_acc =
            test_data.n > 0 ? evaluate(params, cfg, test_data).accuracy : 0.0;
        metrics.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        result.trace.push_back(metrics);
    }

    result.params = std::move(params);
    result.median_last10 = median_last_k(result.trace, 10);
    return result;
}

EvalResult evaluate(const MlpParams& params, const TrainConfig& cfg, const Dataset& data) {
    EvalResult res;
    if (data.n == 0) return res;
    Tensor x = data.input_tensor();
    Tensor out;
    if (mode_uses_kcm(cfg.mode)) {
        KernelSpec spec = cfg.kernel;
        spec.dim = data.d;
        RngStream eval_rng(cfg.eval_seed);
        out = kcm_values(params, spec, cfg.kernel_n_eval, x, eval_rng);
    } else {
        out = mlp_forward(params, x);
    }
    const std::vector<int> pred = labels_of(out);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.n; ++i) hits += pred[i] == data.labels[i];
    res.accuracy = static_cast<double>(hits) / static_cast<double>(data.n);

    if (data.binary) {
        std::vector<double> targets(data.n);
        for (std::size_t i = 0; i < data.n; ++i) {
            targets[i] = static_cast<double>(data.labels[i]);
        }
        res.risk = surrogate_loss_binary(cfg.loss, out, targets, cfg.loss_clip).item();
    } else {
        std::vector<double> onehot(data.n * data.num_classes, 0.0);
        for (std::size_t i = 0; i < data.n; ++i) {
            onehot[i * data.num_classes + data.labels[i]] = 1.0;
        }
        Tensor t = Tensor::matrix(data.n, data.num_classes, onehot);
        res.risk = surrogate_loss_multiclass(out, t).item();
    }
    return res;
}

double median_last_k(const std::vector<EpochMetrics>& trace, std::size_t k) {
    if (trace.empty()) throw ContractError("median_last_k: empty trace");
    const std::size_t count = std::min(k, trace.size());
    std::vector<double> tail;
    tail.reserve(count);
    for (std::size_t i = trace.size() - count; i < trace.size(); ++i) {
        tail.push_back(trace[i].test_acc);
    }
    std::sort(tail.begin(), tail.end());
    const std::size_t mid = tail.size() / 2;
    return tail.size() % 2 ? tail[mid] : 0.5 * (tail[mid - 1] + tail[mid]);
}

void write_metrics_csv(const std::string& path, Mode mode,
                       const std::vector<EpochMetrics>& trace) {
    std::ostringstream os;
    os << "epoch,mode,train_loss,train_acc,test_acc,wall_ms\n";
    char buf[256];
    for (const auto& m : trace) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.9g,%.9g,%.9g,%.9g\n", m.epoch,
                      mode_to_string(mode).c_str(), m.train_loss, m.train_acc, m.test_acc,
                      m.wall_ms);
        os << buf;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_metrics_csv: cannot open " + path);
    out << os.str();
}

std::vector<SweepRow> sweep(const std::vector<double>& h_values,
                            const std::vector<double>& lambda_values,
                            const TrainConfig& base, const Dataset& train_data,
                            const Dataset& test_data, const MlpParams& init) {
    if (h_values.empty() || lambda_values.empty()) {
        throw ContractError("sweep: grid must be non-empty");
    }
    std::vector<SweepRow> rows;
    for (double h : h_values) {
        for (double lambda : lambda_values) {
            TrainConfig cfg = base;
            cfg.mode = Mode::MIXUP_KCM;
            cfg.kernel.bandwidth = h;
            cfg.mixup.force_lambda = lambda;
            TrainResult run = train(cfg, train_data, test_data, init);
            const EvalResult ev = evaluate(run.params, cfg, test_data);
            SweepRow row;
            row.h = h;
            row.lambda = lambda;
            row.mode = cfg.mode;
            row.epochs = cfg.epochs;
            row.batch_size = cfg.batch_size;
            row.n_train = cfg.kernel_n_train;
            row.seeds = cfg.seeds;
            row.train_loss = run.trace.back().train_loss;
            row.test_risk = ev.risk;
            row.test_acc = ev.accuracy;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "h,lambda,mode,epochs,batch_size,kernel_n,seed_init,seed_shuffle,seed_mixup,"
          "seed_kernel,train_loss,test_risk,test_acc\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%.9g,%.9g,%s,%zu,%zu,%zu,%llu,%llu,%llu,%llu,%.9g,%.9g,%.9g\n",
                      r.h, r.lambda, mode_to_string(r.mode).c_str(), r.epochs,
                      r.batch_size, r.n_train,
                      static_cast<unsigned long long>(r.seeds.init),
                      static_cast<unsigned long long>(r.seeds.shuffle),
                      static_cast<unsigned long long>(r.seeds.mixup),
                      static_cast<unsigned long long>(r.seeds.kernel), r.train_loss,
                      r.test_risk, r.test_acc);
        os << buf;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_sweep_csv: cannot open " + path);
    out << os.str();
}

}  // namespace kcm
