#include "kcm/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "kcm/errors.hpp"

namespace kcm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + v + "' as a real number");
    }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + v + "' as a non-negative integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + v + "' as an unsigned integer");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": cannot parse '" + v + "' as a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(parse_size(key, item));
    return out;
}

struct KeyEntry {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::string doc;
};

const std::map<std::string, KeyEntry>& key_table() {
    static const std::map<std::string, KeyEntry> table = [] {
        std::map<std::string, KeyEntry> t;
        auto add = [&t](const std::string& key, const std::string& doc, auto setter) {
            t[key] = KeyEntry{setter, doc};
        };
        add("mode", "learning rule: ERM | MIXUP | KCM | MIXUP_KCM",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                mode_from_string(v);  // validates
                c.mode = v;
                (void)k;
            });
        add("out.dir", "output directory (default $KCM_OUT or .)",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; });
        add("out.tag", "filename prefix for artifacts",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_tag = v; });

        add("dataset.kind", "twomoon | cifar10 | cifar100",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v != "twomoon" && v != "cifar10" && v != "cifar100") {
                    throw ConfigError(k + ": unknown dataset kind '" + v + "'");
                }
                c.dataset_kind = v;
            });
        add("dataset.seed", "two-moon generation seed",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.dataset_seed = parse_u64(k, v);
            });
        add("dataset.n_train", "two-moon training points",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.n_train = parse_size(k, v);
            });
        add("dataset.n_test", "two-moon test points",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.n_test = parse_size(k, v);
            });
        add("dataset.noise", "two-moon noise standard deviation",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.noise = parse_double(k, v);
            });
        add("dataset.path", "directory holding CIFAR binary files",
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
                c.dataset_path = v;
            });
        add("dataset.train_files", "comma list of training files (overrides canonical)",
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
                c.train_files = split_list(v);
            });
        add("dataset.test_files", "comma list of test files",
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
                c.test_files = split_list(v);
            });
        add("dataset.limit_train", "keep only the first k training records (0 = all)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.limit_train = parse_size(k, v);
            });
        add("dataset.limit_test", "keep only the first k test records (0 = all)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.limit_test = parse_size(k, v);
            });
        add("dataset.normalize", "per-channel standardization from the training split",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.normalize = parse_bool(k, v);
            });
        add("dataset.channels", "channel count for per-channel normalization",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.channels = parse_size(k, v);
            });

        add("model.hidden", "comma list of hidden layer widths (empty = linear model)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.hidden = parse_size_list(k, v);
            });

        add("train.epochs", "training epochs",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.epochs = parse_size(k, v);
            });
        add("train.batch_size", "minibatch size n_B",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.batch_size = parse_size(k, v);
            });
        add("train.lr", "initial learning rate",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.lr = parse_double(k, v);
            });
        add("train.lr_decay_milestones", "epochs at which the rate decays",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.lr_milestones = parse_size_list(k, v);
            });
        add("train.lr_decay_factor", "multiplicative decay factor",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.lr_factor = parse_double(k, v);
            });
        add("train.momentum", "SGD momentum",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.momentum = parse_double(k, v);
            });
        add("train.weight_decay", "L2 weight decay",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.weight_decay = parse_double(k, v);
            });
        add("train.loss", "binary surrogate: logistic | hinge | logistic_clipped",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                surrogate_from_string(v);
                c.loss = v;
                (void)k;
            });
        add("train.loss_clip", "bound B for logistic_clipped",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.loss_clip = parse_double(k, v);
            });
        add("train.flip", "random horizontal flip (CIFAR rows)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.flip = parse_bool(k, v);
            });
        add("train.crop", "random padded crop (CIFAR rows)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.crop = parse_bool(k, v);
            });
        add("train.crop_pad", "crop padding",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.crop_pad = parse_size(k, v);
            });

        add("seed.init", "weight init stream",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.seeds.init = parse_u64(k, v);
            });
        add("seed.shuffle", "batch shuffling stream",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.seeds.shuffle = parse_u64(k, v);
            });
        add("seed.mixup", "mixup lambda/pairing stream",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.seeds.mixup = parse_u64(k, v);
            });
        add("seed.kernel", "kernel offset stream",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.seeds.kernel = parse_u64(k, v);
            });

        add("mixup.alpha", "Beta(alpha, alpha) parameter",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.mixup_alpha = parse_double(k, v);
            });
        add("mixup.per_example", "one lambda per pair (Algorithm-style) vs per batch",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.mixup_per_example = parse_bool(k, v);
            });
        add("mixup.min_trick", "apply lambda <- min(lambda, 1-lambda)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.mixup_min_trick = parse_bool(k, v);
            });
        add("mixup.force_lambda", "pin lambda to a constant ('none' to unset)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v == "none") {
                    c.mixup_force_lambda.reset();
                } else {
                    c.mixup_force_lambda = parse_double(k, v);
                }
            });

        add("kernel.h", "bandwidth h (>= 0; 0 = degenerate point mass)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.kernel_h = parse_double(k, v);
            });
        add("kernel.n_train", "Monte Carlo draws per training step",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.kernel_n_train = parse_size(k, v);
            });
        add("kernel.n_eval", "Monte Carlo draws at evaluation (default: n_train)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.kernel_n_eval = parse_size(k, v);
            });
        add("kernel.antithetic", "mirror draws in (u, -u) pairs",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.kernel_antithetic = parse_bool(k, v);
            });
        add("kernel.eval_seed", "fixed seed for evaluation offsets",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.kernel_eval_seed = parse_u64(k, v);
            });

        add("attack.kind", "FGSM | IFGSM",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                attack_kind_from_string(v);
                c.attack_kind = v;
                (void)k;
            });
        add("attack.epsilon", "l_inf budget in model input units",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_epsilon = parse_double(k, v);
            });
        add("attack.iterations", "I-FGSM iterations",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_iterations = parse_size(k, v);
            });
        add("attack.step", "I-FGSM step size (0 = epsilon/iterations)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_step = parse_double(k, v);
            });
        add("attack.threat", "white | black",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v != "white" && v != "black") {
                    throw ConfigError(k + ": threat must be white or black");
                }
                c.attack_threat = v;
            });
        add("attack.source_checkpoint", "gradient source for black-box transfer",
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
                c.attack_source_checkpoint = v;
            });
        add("attack.box_lo", "uniform lower pixel bound ('none' to unset)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v == "none") c.attack_box_lo.reset();
                else c.attack_box_lo = parse_double(k, v);
            });
        add("attack.box_hi", "uniform upper pixel bound ('none' to unset)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v == "none") c.attack_box_hi.reset();
                else c.attack_box_hi = parse_double(k, v);
            });
        add("attack.use_data_box", "derive per-coordinate box from the normalization record",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_use_data_box = parse_bool(k, v);
            });
        add("attack.target_kcm", "attack f^K (frozen offsets) rather than raw f",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_target_kcm = parse_bool(k, v);
            });
        add("attack.resample_offsets", "re-draw offsets every I-FGSM iteration",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_resample_offsets = parse_bool(k, v);
            });
        add("attack.seed", "fixed seed for the frozen attack offsets",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.attack_seed = parse_u64(k, v);
            });

        add("contour.resolution", "nodes per axis",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.contour_resolution = parse_size(k, v);
            });
        add("contour.x1_min", "grid bound",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.contour_x1_min = parse_double(k, v);
            });
        add("contour.x1_max", "grid bound",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.contour_x1_max = parse_double(k, v);
            });
        add("contour.x2_min", "grid bound",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.contour_x2_min = parse_double(k, v);
            });
        add("contour.x2_max", "grid bound",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.contour_x2_max = parse_double(k, v);
            });

        add("sweep.h_values", "bandwidth grid (comma list)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.sweep_h = parse_double_list(k, v);
            });
        add("sweep.lambda_values", "forced-lambda grid (comma list)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.sweep_lambda = parse_double_list(k, v);
            });

        add("rademacher.kind", "linear | mlp",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v != "linear" && v != "mlp") throw ConfigError(k + ": kind must be linear or mlp");
                c.rademacher_kind = v;
            });
        add("rademacher.n", "sample size",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_n = parse_size(k, v);
            });
        add("rademacher.d", "input dimension",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_d = parse_size(k, v);
            });
        add("rademacher.radius", "l2 ball radius of the linear class",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_radius = parse_double(k, v);
            });
        add("rademacher.method", "exhaustive | mc",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v != "exhaustive" && v != "mc") throw ConfigError(k + ": method must be exhaustive or mc");
                c.rademacher_method = v;
            });
        add("rademacher.m", "Monte Carlo sign draws",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_m = parse_size(k, v);
            });
        add("rademacher.seed", "sample + sign stream",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_seed = parse_u64(k, v);
            });
        add("rademacher.sign_draws", "sign draws for the MLP lower bound",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_sign_draws = parse_size(k, v);
            });
        add("rademacher.ascent_steps", "projected ascent steps per sign vector",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_ascent_steps = parse_size(k, v);
            });
        add("rademacher.ascent_rate", "ascent step size",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_ascent_rate = parse_double(k, v);
            });
        add("rademacher.radii", "spectral budget r_s (comma list)",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_radii = parse_double_list(k, v);
            });
        add("rademacher.hidden", "hidden widths of the MLP class",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.rademacher_hidden = parse_size_list(k, v);
            });
        return t;
    }();
    return table;
}

}  // namespace

void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = key_table();
    const auto it = table.find(key);
    if (it == table.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    it->second.set(cfg, key, value);
}

bool config_has_key(const std::string& key) { return key_table().count(key) > 0; }

void config_load_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            config_set(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::string config_schema_help() {
    std::ostringstream os;
    for (const auto& [key, entry] : key_table()) {
        os << "  " << key << "\n      " << entry.doc << "\n";
    }
    return os.str();
}

std::string ExperimentConfig::resolved_out_dir() const {
    if (!out_dir.empty()) return out_dir;
    if (const char* env = std::getenv("KCM_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    return ".";
}

std::string ExperimentConfig::artifact_path(const std::string& name) const {
    const std::string prefix = out_tag.empty() ? "" : out_tag + "_";
    return (std::filesystem::path(resolved_out_dir()) / (prefix + name)).string();
}

bool ExperimentConfig::wants_normalization() const {
    if (normalize.has_value()) return *normalize;
    return dataset_kind != "twomoon";
}

TrainConfig ExperimentConfig::to_train_config() const {
    TrainConfig t;
    t.mode = mode_from_string(mode);
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.lr.initial = lr;
    t.lr.milestones = lr_milestones;
    t.lr.factor = lr_factor;
    t.momentum = momentum;
    t.weight_decay = weight_decay;
    t.loss = surrogate_from_string(loss);
    t.loss_clip = loss_clip;
    t.seeds = seeds;
    t.mixup.alpha = mixup_alpha;
    t.mixup.per_example = mixup_per_example;
    t.mixup.min_trick = mixup_min_trick;
    t.mixup.force_lambda = mixup_force_lambda;
    t.kernel.bandwidth = kernel_h;
    t.kernel.antithetic = kernel_antithetic;
    t.kernel.dim = 1;  // resolved against the dataset at train time
    t.kernel_n_train = kernel_n_train;
    t.kernel_n_eval = kernel_n_eval.value_or(kernel_n_train);
    t.eval_seed = kernel_eval_seed;
    t.augment_flip = flip;
    t.augment_crop = crop;
    t.augment_pad = crop_pad;
    return t;
}

AttackConfig ExperimentConfig::to_attack_config() const {
    AttackConfig a;
    a.kind = attack_kind_from_string(attack_kind);
    a.epsilon = attack_epsilon;
    a.iterations = attack_iterations;
    a.step_size = attack_step;
    a.threat = attack_threat == "black" ? ThreatModel::black_box : ThreatModel::white_box;
    a.source_checkpoint = attack_source_checkpoint;
    a.box_lo = attack_box_lo;
    a.box_hi = attack_box_hi;
    a.target_kcm = attack_target_kcm;
    a.resample_offsets = attack_resample_offsets;
    a.offset_seed = attack_seed;
    return a;
}

namespace {

void apply_limit(Dataset& ds, std::size_t limit) {
    if (limit == 0 || limit >= ds.n) return;
    ds.n = limit;
    ds.inputs.resize(limit * ds.d);
    ds.labels.resize(limit);
}

std::vector<std::string> resolve_files(const ExperimentConfig& cfg, bool train_split) {
    const std::vector<std::string>& given = train_split ? cfg.train_files : cfg.test_files;
    std::vector<std::string> files;
    if (!given.empty()) {
        for (const auto& f : given) {
            files.push_back((std::filesystem::path(cfg.dataset_path) / f).string());
        }
        return files;
    }
    if (cfg.dataset_kind == "cifar10") {
        if (train_split) {
            for (int i = 1; i <= 5; ++i) {
                files.push_back((std::filesystem::path(cfg.dataset_path) /
                                 ("data_batch_" + std::to_string(i) + ".bin"))
                                    .string());
            }
        } else {
            files.push_back(
                (std::filesystem::path(cfg.dataset_path) / "test_batch.bin").string());
        }
    } else {  // cifar100
        files.push_back((std::filesystem::path(cfg.dataset_path) /
                         (train_split ? "train.bin" : "test.bin"))
                            .string());
    }
    return files;
}

}  // namespace

LoadedData load_datasets(const ExperimentConfig& cfg) {
    LoadedData data;
    if (cfg.dataset_kind == "twomoon") {
        data.train = two_moons(cfg.n_train, cfg.noise, cfg.dataset_seed);
        data.train.split = "train";
        data.test = two_moons(cfg.n_test, cfg.noise, derive_seed(cfg.dataset_seed, 1));
        data.test.split = "test";
        if (cfg.wants_normalization()) {
            Dataset stats = data.train;
            normalize_like(data.train, stats, data.train.d);  // per coordinate
            apply_normalization(data.test, data.train.norm_mean, data.train.norm_scale);
        }
        return data;
    }
    const bool cifar10 = cfg.dataset_kind == "cifar10";
    data.train = cifar10 ? cifar10_read(resolve_files(cfg, true), "train")
                         : cifar100_read(resolve_files(cfg, true), "train");
    data.test = cifar10 ? cifar10_read(resolve_files(cfg, false), "test")
                        : cifar100_read(resolve_files(cfg, false), "test");
    apply_limit(data.train, cfg.limit_train);
    apply_limit(data.test, cfg.limit_test);
    if (cfg.wants_normalization()) {
        Dataset stats = data.train;
        normalize_like(data.train, stats, cfg.channels);
        apply_normalization(data.test, data.train.norm_mean, data.train.norm_scale);
    }
    return data;
}

std::vector<std::size_t> model_dims(const ExperimentConfig& cfg, const Dataset& data) {
    std::vector<std::size_t> dims;
    dims.push_back(data.d);
    for (std::size_t h : cfg.hidden) dims.push_back(h);
    dims.push_back(data.binary ? 1 : static_cast<std::size_t>(data.num_classes));
    return dims;
}

}  // namespace kcm
