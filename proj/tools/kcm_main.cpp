#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "kcm/attack.hpp"
#include "kcm/checkpoint.hpp"
#include "kcm/config.hpp"
#include "kcm/contour.hpp"
#include "kcm/errors.hpp"
#include "kcm/rademacher.hpp"
#include "kcm/train.hpp"

namespace {

using namespace kcm;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void print_usage() {
    std::cout <<
        "Usage: kcm <subcommand> [--config FILE] [--<key> VALUE ...]\n"
        "\n"
        "Subcommands:\n"
        "  train        train one model, write metrics CSV + checkpoint\n"
        "  eval         load a checkpoint, print accuracy and surrogate risk\n"
        "  attack       FGSM / I-FGSM robustness report CSV\n"
        "  contour      decision-surface grid CSV (2-d models)\n"
        "  rademacher   empirical Rademacher complexity CSV\n"
        "  sweep        bandwidth x forced-lambda grid CSV\n"
        "  help-config  list every config key\n"
        "\n"
        "Common flags:\n"
        "  --config FILE        key = value file, '#' comments\n"
        "  --checkpoint FILE    model to evaluate/attack/contour\n"
        "  --out DIR            output directory (else $KCM_OUT, else .)\n"
        "  --mode M             shorthand for the 'mode' key\n"
        "  --h LIST             shorthand for sweep.h_values\n"
        "  --lambda LIST        shorthand for sweep.lambda_values\n"
        "  any config key:      --kernel.h 0.05, --train.epochs 200, ...\n";
}

struct CliArgs {
    std::string subcommand;
    std::string checkpoint;
    ExperimentConfig cfg;
};

CliArgs parse_cli(int argc, char** argv) {
    CliArgs args;
    if (argc < 2) throw ConfigError("missing subcommand");
    args.subcommand = argv[1];
    // Collect overrides first so --config applies before explicit --key pairs,
    // regardless of flag order.
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (int i = 2; i < argc; ++i) {
        std::string flag = argv[i];
        if (flag.rfind("--", 0) != 0) {
            throw ConfigError("expected a --flag, got '" + flag + "'");
        }
        flag = flag.substr(2);
        std::string value;
        const auto eq = flag.find('=');
        if (eq != std::string::npos) {
            value = flag.substr(eq + 1);
            flag = flag.substr(0, eq);
        } else {
            if (i + 1 >= argc) throw ConfigError("flag --" + flag + " needs a value");
            value = argv[++i];
        }
        if (flag == "config") {
            config_path = value;
        } else if (flag == "checkpoint") {
            args.checkpoint = value;
        } else if (flag == "out") {
            overrides.emplace_back("out.dir", value);
        } else if (flag == "h") {
            overrides.emplace_back("sweep.h_values", value);
        } else if (flag == "lambda") {
            overrides.emplace_back("sweep.lambda_values", value);
        } else if (config_has_key(flag)) {
            overrides.emplace_back(flag, value);
        } else {
            throw ConfigError("unknown flag --" + flag);
        }
    }
    if (!config_path.empty()) config_load_file(args.cfg, config_path);
    for (const auto& [key, value] : overrides) config_set(args.cfg, key, value);
    return args;
}

MlpParams init_model(const ExperimentConfig& cfg, const Dataset& train) {
    RngStream init_rng(cfg.seeds.init);
    return make_mlp(model_dims(cfg, train), init_rng);
}

int cmd_train(const CliArgs& args) {
    const ExperimentConfig& cfg = args.cfg;
    std::filesystem::create_directories(cfg.resolved_out_dir());
    LoadedData data = load_datasets(cfg);
    TrainConfig tc = cfg.to_train_config();
    MlpParams params = init_model(cfg, data.train);

    TrainResult result = train(tc, data.train, data.test, std::move(params));
    write_metrics_csv(cfg.artifact_path("metrics.csv"), tc.mode, result.trace);

    Checkpoint ckpt;
    ckpt.params = result.params;
    ckpt.seeds = cfg.seeds;
    if (data.train.normalized) {
        ckpt.norm_mean = data.train.norm_mean;
        ckpt.norm_scale = data.train.norm_scale;
    }
    checkpoint_save(ckpt, cfg.artifact_path("model.ckpt"));

    const EvalResult final_eval = evaluate(result.params, tc, data.test);
    std::printf("mode=%s epochs=%zu final_test_acc=%.4f median_last10=%.4f risk=%.6f\n",
                mode_to_string(tc.mode).c_str(), tc.epochs, final_eval.accuracy,
                result.median_last10, final_eval.risk);
    std::printf("wrote %s and %s\n", cfg.artifact_path("metrics.csv").c_str(),
                cfg.artifact_path("model.ckpt").c_str());
    return kExitOk;
}

int cmd_eval(const CliArgs& args) {
    if (args.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
    const Checkpoint ckpt = checkpoint_load(args.checkpoint);
    LoadedData data = load_datasets(args.cfg);
    const TrainConfig tc = args.cfg.to_train_config();
    const EvalResult train_eval = evaluate(ckpt.params, tc, data.train);
    const EvalResult test_eval = evaluate(ckpt.params, tc, data.test);
    std::printf("train_acc=%.4f train_risk=%.6f test_acc=%.4f test_risk=%.6f\n",
                train_eval.accuracy, train_eval.risk, test_eval.accuracy, test_eval.risk);
    return kExitOk;
}

int cmd_attack(const CliArgs& args) {
    if (args.checkpoint.empty()) throw ConfigError("attack requires --checkpoint");
    const ExperimentConfig& cfg = args.cfg;
    std::filesystem::create_directories(cfg.resolved_out_dir());
    const Checkpoint ckpt = checkpoint_load(args.checkpoint);
    LoadedData data = load_datasets(cfg);
    const TrainConfig tc = cfg.to_train_config();
    AttackConfig ac = cfg.to_attack_config();
    if (cfg.attack_use_data_box && data.test.normalized) {
        // Valid pixel range [0,1] mapped through the normalization record.
        ac.box_lo_vec.resize(data.test.d);
        ac.box_hi_vec.resize(data.test.d);
        for (std::size_t j = 0; j < data.test.d; ++j) {
            ac.box_lo_vec[j] = (0.0 - data.test.norm_mean[j]) / data.test.norm_scale[j];
            ac.box_hi_vec[j] = (1.0 - data.test.norm_mean[j]) / data.test.norm_scale[j];
        }
    }
    MlpParams source;
    const MlpParams* source_ptr = nullptr;
    if (ac.threat == ThreatModel::black_box) {
        source = checkpoint_load(ac.source_checkpoint).params;
        source_ptr = &source;
    }
    const AttackReport report =
        evaluate_robustness(ckpt.params, tc, ac, data.test, source_ptr);
    write_attack_csv(cfg.artifact_path("attack_report.csv"), {report});
    std::printf("%s %s eps=%.4g clean_acc=%.4f adv_acc=%.4f max_linf=%.4g\n",
                threat_name(report.threat).c_str(), attack_kind_name(report.kind).c_str(),
                report.epsilon, report.clean_acc, report.adv_acc, report.max_linf);
    std::printf("wrote %s\n", cfg.artifact_path("attack_report.csv").c_str());
    return kExitOk;
}

int cmd_contour(const CliArgs& args) {
    if (args.checkpoint.empty()) throw ConfigError("contour requires --checkpoint");
    const ExperimentConfig& cfg = args.cfg;
    std::filesystem::create_directories(cfg.resolved_out_dir());
    const Checkpoint ckpt = checkpoint_load(args.checkpoint);
    const TrainConfig tc = cfg.to_train_config();
    ContourBounds bounds{cfg.contour_x1_min, cfg.contour_x1_max, cfg.contour_x2_min,
                         cfg.contour_x2_max};
    const KernelSpec* spec = mode_uses_kcm(tc.mode) ? &tc.kernel : nullptr;
    const ContourGrid grid = export_contour(ckpt.params, spec, tc.kernel_n_eval,
                                            tc.eval_seed, bounds, cfg.contour_resolution);
    write_contour_csv(grid, cfg.artifact_path("contour.csv"));
    std::printf("wrote %s (%zu nodes)\n", cfg.artifact_path("contour.csv").c_str(),
                grid.values.size());
    return kExitOk;
}

int cmd_rademacher(const CliArgs& args) {
    const ExperimentConfig& cfg = args.cfg;
    std::filesystem::create_directories(cfg.resolved_out_dir());
    RngStream rng(cfg.rademacher_seed);
    const std::size_t n = cfg.rademacher_n;
    const std::size_t d = cfg.rademacher_d;
    std::vector<double> sample(n * d);
    for (double& v : sample) v = rng.normal();

    std::vector<RademacherCsvRow> rows;
    if (cfg.rademacher_kind == "linear") {
        const RademacherMethod method = cfg.rademacher_method == "mc"
                                            ? RademacherMethod::monte_carlo
                                            : RademacherMethod::exhaustive;
        RademacherEstimate est = rademacher_linear_l2(sample, n, d, cfg.rademacher_radius,
                                                      method, cfg.rademacher_m, rng);
        rows.push_back({est, n});
    } else {
        std::vector<std::size_t> dims;
        dims.push_back(d);
        for (std::size_t h : cfg.rademacher_hidden) dims.push_back(h);
        dims.push_back(1);
        SpectralBudget budget{cfg.rademacher_radii};
        MlpAscentOptions opt;
        opt.sign_draws = cfg.rademacher_sign_draws;
        opt.ascent_steps = cfg.rademacher_ascent_steps;
        opt.ascent_rate = cfg.rademacher_ascent_rate;
        RademacherEstimate est =
            rademacher_mlp_lower_bound(dims, budget, sample, n, d, opt, rng);
        rows.push_back({est, n});
        // Context for the h-scaling of the convolved class (Monte Carlo free).
        double b_x = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) norm2 += sample[i * d + j] * sample[i * d + j];
            b_x = std::max(b_x, std::sqrt(norm2));
        }
        const double ck1 = gaussian_unit_norm_moment(d);
        std::printf("kcm_scale(h=%.4g, cK1=%.6g, B_x=%.6g) = %.6g\n", cfg.kernel_h, ck1,
                    b_x, kcm_scale(cfg.kernel_h, ck1, b_x));
    }
    write_rademacher_csv(cfg.artifact_path("rademacher.csv"), rows);
    for (const auto& row : rows) {
        std::printf("%s n=%zu M=%zu value=%.8g stderr=%.3g\n",
                    rademacher_method_name(row.estimate.method).c_str(), row.n,
                    row.estimate.sign_samples, row.estimate.value, row.estimate.std_error);
    }
    std::printf("wrote %s\n", cfg.artifact_path("rademacher.csv").c_str());
    return kExitOk;
}

int cmd_sweep(const CliArgs& args) {
    const ExperimentConfig& cfg = args.cfg;
    std::filesystem::create_directories(cfg.resolved_out_dir());
    LoadedData data = load_datasets(cfg);
    TrainConfig tc = cfg.to_train_config();
    const MlpParams init = init_model(cfg, data.train);
    const std::vector<SweepRow> rows =
        sweep(cfg.sweep_h, cfg.sweep_lambda, tc, data.train, data.test, init);
    write_sweep_csv(cfg.artifact_path("sweep.csv"), rows);
    std::printf("wrote %s (%zu cells)\n", cfg.artifact_path("sweep.csv").c_str(),
                rows.size());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    std::string subcommand = argc >= 2 ? argv[1] : "";
    try {
        CliArgs args = parse_cli(argc, argv);
        if (subcommand == "train") return cmd_train(args);
        if (subcommand == "eval") return cmd_eval(args);
        if (subcommand == "attack") return cmd_attack(args);
        if (subcommand == "contour") return cmd_contour(args);
        if (subcommand == "rademacher") return cmd_rademacher(args);
        if (subcommand == "sweep") return cmd_sweep(args);
        if (subcommand == "help-config") {
            std::cout << "Config keys:\n" << config_schema_help();
            return kExitOk;
        }
        if (subcommand == "help" || subcommand == "--help" || subcommand == "-h") {
            print_usage();
            return kExitOk;
        }
        std::cerr << "error: unknown subcommand '" << subcommand << "'\n\n";
        print_usage();
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (subcommand.empty()) print_usage();
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
