#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kcm/data.hpp"
#include "kcm/kernel.hpp"
#include "kcm/mlp.hpp"
#include "kcm/train.hpp"

namespace kcm {

enum class AttackKind { FGSM, IFGSM };
enum class ThreatModel { white_box, black_box };

AttackKind attack_kind_from_string(const std::string& s);
std::string attack_kind_name(AttackKind kind);
std::string threat_name(ThreatModel threat);

struct AttackConfig {
    AttackKind kind = AttackKind::FGSM;
    double epsilon = 0.0;        // l_inf budget in model-input units
    std::size_t iterations = 10; // I-FGSM
    double step_size = 0.0;      // 0 -> epsilon / iterations
    std::optional<double> box_lo, box_hi;       // uniform valid range
    std::vector<double> box_lo_vec, box_hi_vec; // per-coordinate override
    ThreatModel threat = ThreatModel::white_box;
    std::string source_checkpoint;  // black-box gradient source
    bool target_kcm = true;         // attack f^K when the mode has a kernel
    bool resample_offsets = false;  // re-draw offsets every I-FGSM iteration
    std::uint64_t offset_seed = 1234;

    void validate() const;
    double effective_step() const;
};

struct AttackReport {
    double clean_acc = 0.0;
    double adv_acc = 0.0;
    double max_linf = 0.0;
    std::vector<std::uint8_t> success;  // label flipped away from truth
    AttackKind kind = AttackKind::FGSM;
    ThreatModel threat = ThreatModel::white_box;
    double epsilon = 0.0;
    std::size_t iterations = 1;
};

// Gradient source for crafting: a model plus (optionally) a frozen offset
// batch so the attacked function f^K is well defined across iterations.
struct AttackTarget {
    const MlpParams* params = nullptr;
    SurrogateKind loss = SurrogateKind::logistic;
    double loss_clip = 10.0;
    const OffsetBatch* offsets = nullptr;  // null -> raw f
    // Expectation-over-transformation option: when resample_offsets is set,
    // fresh draws from this spec replace the frozen batch every iteration.
    const KernelSpec* resample_spec = nullptr;
    std::size_t resample_n = 1;
};

// x_adv = clip_box(x + eps * sign(grad_x loss)); sign(0) := 0.
std::vector<double> fgsm(const AttackTarget& target, const Dataset& data,
                         const std::vector<std::size_t>& idx, const AttackConfig& cfg);

// Iterated sign-gradient ascent; every iterate is projected onto the
// epsilon-ball around x and the valid box. One iteration at step size eps
// reproduces fgsm exactly.
std::vector<double> ifgsm(const AttackTarget& target, const Dataset& data,
                          const std::vector<std::size_t>& idx, const AttackConfig& cfg);

// Crafts adversarial examples against the threat model's gradient source and
// scores the target model's predictions on them. In black-box mode `source`
// supplies the gradients; the target never sees its own.
AttackReport evaluate_robustness(const MlpParams& target_params, const TrainConfig& target_cfg,
                                 const AttackConfig& attack_cfg, const Dataset& data,
                                 const MlpParams* source_params = nullptr);

// CSV: threat,kind,epsilon,iters,clean_acc,adv_acc,max_linf
void write_attack_csv(const std::string& path, const std::vector<AttackReport>& reports);

}  // namespace kcm
