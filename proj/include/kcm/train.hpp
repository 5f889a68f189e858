#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kcm/data.hpp"
#include "kcm/kernel.hpp"
#include "kcm/mixup.hpp"
#include "kcm/mlp.hpp"
#include "kcm/rng.hpp"

namespace kcm {

enum class Mode { ERM, MIXUP, KCM, MIXUP_KCM };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode mode);
bool mode_uses_mixup(Mode mode);
bool mode_uses_kcm(Mode mode);

enum class SurrogateKind { logistic, hinge, logistic_clipped };

SurrogateKind surrogate_from_string(const std::string& s);

// Mean of phi(margin) over a batch; margins = y_tilde * f values.
Tensor binary_surrogate(SurrogateKind kind, const Tensor& margins, double clip_b);
// Convenience: builds margins from outputs (m x 1) and targets.
Tensor surrogate_loss_binary(SurrogateKind kind, const Tensor& outputs,
                             const std::vector<double>& targets, double clip_b);
// Mean cross entropy of logits vs mixed one-hot targets.
Tensor surrogate_loss_multiclass(const Tensor& logits, const Tensor& targets);

struct LrSchedule {
    double initial = 0.1;
    std::vector<std::size_t> milestones;  // epochs at which the rate decays
    double factor = 0.1;

    double at_epoch(std::size_t epoch) const;  // 1-based
};

struct TrainConfig {
    Mode mode = Mode::ERM;
    std::size_t epochs = 1;
    std::size_t batch_size = 100;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    SurrogateKind loss = SurrogateKind::logistic;
    double loss_clip = 10.0;  // B for the clipped variant
    SeedBundle seeds;

    MixupConfig mixup;

    KernelSpec kernel;
    std::size_t kernel_n_train = 1;
    std::size_t kernel_n_eval = 1;
    std::uint64_t eval_seed = 97;
    bool per_example_offsets = false;

    bool augment_flip = false;
    bool augment_crop = false;
    std::size_t augment_pad = 4;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    MlpParams params;
    std::vector<EpochMetrics> trace;
    double median_last10 = 0.0;  // median test accuracy of the last 10 epochs
};

// Observer invoked after every optimizer step with the 1-based step index.
using StepObserver = std::function<void(std::size_t, const MlpParams&)>;

TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset& test_data, MlpParams params,
                  const StepObserver& observer = nullptr);

struct EvalResult {
    double accuracy = 0.0;
    double risk = 0.0;  // mean surrogate loss
};

// 0-1 accuracy of the mode's classifier (sign(f^K) for KCM modes, sign(f)
// otherwise) plus mean surrogate loss on the same predictions.
EvalResult evaluate(const MlpParams& params, const TrainConfig& cfg, const Dataset& data);

double median_last_k(const std::vector<EpochMetrics>& trace, std::size_t k);

// Metrics CSV: epoch,mode,train_loss,train_acc,test_acc,wall_ms
void write_metrics_csv(const std::string& path, Mode mode,
                       const std::vector<EpochMetrics>& trace);

struct SweepRow {
    double h = 0.0;
    double lambda = 0.0;
    Mode mode = Mode::MIXUP_KCM;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    std::size_t n_train = 0;
    SeedBundle seeds;
    double train_loss = 0.0;
    double test_risk = 0.0;
    double test_acc = 0.0;
};

// Grid over bandwidths and forced interpolation weights; one model per cell,
// shared seeds. h = 0 together with lambda = 0 reproduces the ERM baseline.
std::vector<SweepRow> sweep(const std::vector<double>& h_values,
                            const std::vector<double>& lambda_values,
                            const TrainConfig& base, const Dataset& train_data,
                            const Dataset& test_data, const MlpParams& init);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace kcm
