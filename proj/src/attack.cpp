#include "kcm/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kcm/errors.hpp"

namespace kcm {

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "FGSM") return AttackKind::FGSM;
    if (s == "IFGSM") return AttackKind::IFGSM;
    throw ConfigError("unknown attack kind '" + s + "' (FGSM, IFGSM)");
}

std::string attack_kind_name(AttackKind kind) {
    return kind == AttackKind::FGSM ? "FGSM" : "IFGSM";
}

std::string threat_name(ThreatModel threat) {
    return threat == ThreatModel::white_box ? "white-box" : "black-box";
}

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw ContractError("AttackConfig: epsilon must be >= 0");
    if (iterations < 1) throw ContractError("AttackConfig: iterations must be >= 1");
    if (step_size < 0.0) throw ContractError("AttackConfig: step size must be >= 0");
    if (box_lo && box_hi && *box_lo > *box_hi) {
        throw ContractError("AttackConfig: empty box");
    }
    if (threat == ThreatModel::black_box && source_checkpoint.empty()) {
        throw ConfigError("black-box attack requires attack.source_checkpoint");
    }
}

double AttackConfig::effective_step() const {
    if (step_size > 0.0) return step_size;
    return epsilon / static_cast<double>(iterations);
}

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void clip_box(std::vector<double>& x, std::size_t d, const AttackConfig& cfg) {
    if (!cfg.box_lo_vec.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = std::clamp(x[i], cfg.box_lo_vec[i % d], cfg.box_hi_vec[i % d]);
        }
        return;
    }
    if (cfg.box_lo) {
        for (double& v : x) v = std::max(v, *cfg.box_lo);
    }
    if (cfg.box_hi) {
        for (double& v : x) v = std::min(v, *cfg.box_hi);
    }
}

// d loss / d x at `x` for the target model (through the frozen convolution
// when present).
std::vector<double> input_gradient(const AttackTarget& target, const std::vector<double>& x,
                                   std::size_t m, std::size_t d,
                                   const std::vector<double>& targets, bool binary,
                                   std::size_t width) {
    Tape tape;
    Tensor xt = tape.leaf(Tensor::matrix(m, d, x));
    Tensor out;
    if (target.offsets != nullptr) {
        out = kcm_forward(
            [target](const Tensor& in) { return mlp_forward(*target.params, in); }, xt,
            *target.offsets);
    } else {
        out = mlp_forward(*target.params, xt);
    }
    Tensor loss;
    if (binary) {
        loss = surrogate_loss_binary(target.loss, out, targets, target.loss_clip);
    } else {
        loss = surrogate_loss_multiclass(out, Tensor::matrix(m, width, targets));
    }
    tape.backward(loss);
    return xt.grad();
}

struct AttackProblem {
    std::vector<double> x0;       // m x d originals
    std::vector<double> targets;  // m (binary) or m x C (one-hot)
    std::size_t m = 0, d = 0, width = 1;
    bool binary = true;
};

AttackProblem gather_problem(const Dataset& data, const std::vector<std::size_t>& idx) {
    AttackProblem p;
    p.m = idx.size();
    p.d = data.d;
    p.binary = data.binary;
    p.width = data.binary ? 1 : static_cast<std::size_t>(data.num_classes);
    p.x0.resize(p.m * p.d);
    p.targets.assign(p.m * p.width, 0.0);
    for (std::size_t j = 0; j < p.m; ++j) {
        const std::size_t i = idx[j];
        std::copy(data.inputs.begin() + i * data.d, data.inputs.begin() + (i + 1) * data.d,
                  p.x0.begin() + j * p.d);
        if (p.binary) {
            p.targets[j] = static_cast<double>(data.labels[i]);
        } else {
            p.targets[j * p.width + data.labels[i]] = 1.0;
        }
    }
    return p;
}

std::vector<double> run_attack(const AttackTarget& target, const Dataset& data,
                               const std::vector<std::size_t>& idx, const AttackConfig& cfg,
                               std::size_t iterations, double step) {
    cfg.validate();
    AttackProblem p = gather_problem(data, idx);
    std::vector<double> x = p.x0;
    RngStream offset_rng(cfg.offset_seed);
    OffsetBatch fresh;
    for (std::size_t it = 0; it < iterations; ++it) {
        AttackTarget step_target = target;
        if (cfg.resample_offsets && target.resample_spec != nullptr) {
            fresh = sample_offsets(*target.resample_spec, target.resample_n, offset_rng);
            step_target.offsets = &fresh;
        }
        const std::vector<double> g =
            input_gradient(step_target, x, p.m, p.d, p.targets, p.binary, p.width);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += step * sign0(g[i]);
        }
        // project onto the epsilon ball around the originals
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = std::clamp(x[i], p.x0[i] - cfg.epsilon, p.x0[i] + cfg.epsilon);
        }
        clip_box(x, p.d, cfg);
    }
    return x;
}

}  // namespace

std::vector<double> fgsm(const AttackTarget& target, const Dataset& data,
                         const std::vector<std::size_t>& idx, const AttackConfig& cfg) {
    return run_attack(target, data, idx, cfg, 1, cfg.epsilon);
}

std::vector<double> ifgsm(const AttackTarget& target, const Dataset& data,
                          const std::vector<std::size_t>& idx, const AttackConfig& cfg) {
    return run_attack(target, data, idx, cfg, cfg.iterations, cfg.effective_step());
}

AttackReport evaluate_robustness(const MlpParams& target_params, const TrainConfig& target_cfg,
                                 const AttackConfig& attack_cfg, const Dataset& data,
                                 const MlpParams* source_params) {
    attack_cfg.validate();
    if (attack_cfg.threat == ThreatModel::black_box && source_params == nullptr) {
        throw ConfigError("black-box attack requires an independently trained source model");
    }
    const MlpParams& grad_params =
        attack_cfg.threat == ThreatModel::black_box ? *source_params : target_params;

    std::vector<std::size_t> idx(data.n);
    for (std::size_t i = 0; i < data.n; ++i) idx[i] = i;

    // Freeze one offset batch for the whole attack so the attacked function
    // is well defined; only KCM-style targets get one.
    const bool kcm_target = mode_uses_kcm(target_cfg.mode) && attack_cfg.target_kcm;
    OffsetBatch frozen;
    KernelSpec spec = target_cfg.kernel;
    spec.dim = data.d;
    AttackTarget target;
    target.params = &grad_params;
    target.loss = target_cfg.loss;
    target.loss_clip = target_cfg.loss_clip;
    if (kcm_target && attack_cfg.threat == ThreatModel::white_box) {
        RngStream rng(attack_cfg.offset_seed);
        frozen = sample_offsets(spec, target_cfg.kernel_n_eval, rng);
        target.offsets = &frozen;
        if (attack_cfg.resample_offsets) {
            target.resample_spec = &spec;
            target.resample_n = target_cfg.kernel_n_eval;
        }
    }

    const std::vector<double> x_adv =
        attack_cfg.kind == AttackKind::FGSM ? fgsm(target, data, idx, attack_cfg)
                                            : ifgsm(target, data, idx, attack_cfg);

    double max_linf = 0.0;
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
        max_linf = std::max(max_linf, std::abs(x_adv[i] - data.inputs[i]));
    }

    Dataset adv = data;
    adv.inputs = x_adv;

    const EvalResult clean = evaluate(target_params, target_cfg, data);
    const EvalResult advr = evaluate(target_params, target_cfg, adv);

    AttackReport report;
    report.clean_acc = clean.accuracy;
    report.adv_acc = advr.accuracy;
    report.max_linf = max_linf;
    report.kind = attack_cfg.kind;
    report.threat = attack_cfg.threat;
    report.epsilon = attack_cfg.epsilon;
    report.iterations = attack_cfg.kind == AttackKind::FGSM ? 1 : attack_cfg.iterations;

    // Per-example success: prediction moved off the true label.
    TrainConfig eval_cfg = target_cfg;
    Tensor adv_out;
    if (mode_uses_kcm(eval_cfg.mode)) {
        KernelSpec spec = eval_cfg.kernel;
        spec.dim = data.d;
        RngStream eval_rng(eval_cfg.eval_seed);
        adv_out = kcm_values(target_params, spec, eval_cfg.kernel_n_eval,
                             adv.input_tensor(), eval_rng);
    } else {
        adv_out = mlp_forward(target_params, adv.input_tensor());
    }
    const std::vector<int> pred = labels_of(adv_out);
    report.success.resize(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
        report.success[i] = pred[i] != data.labels[i] ? 1 : 0;
    }
    return report;
}

void write_attack_csv(const std::string& path, const std::vector<AttackReport>& reports) {
    std::ostringstream os;
    os << "threat,kind,epsilon,iters,clean_acc,adv_acc,max_linf\n";
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%zu,%.9g,%.9g,%.9g\n",
                      threat_name(r.threat).c_str(), attack_kind_name(r.kind).c_str(),
                      r.epsilon, r.iterations, r.clean_acc, r.adv_acc, r.max_linf);
        os << buf;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_attack_csv: cannot open " + path);
    out << os.str();
}

}  // namespace kcm
