#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kcm/attack.hpp"
#include "kcm/data.hpp"
#include "kcm/train.hpp"

namespace kcm {

// Flat `key = value` configuration with dotted section keys and '#'
// comments. Unknown keys are rejected so typos cannot silently change an
// experiment. `kcm help-config` prints the full schema.
struct ExperimentConfig {
    std::string mode = "ERM";
    std::string out_dir;  // empty -> $KCM_OUT or "."
    std::string out_tag;

    // dataset
    std::string dataset_kind = "twomoon";
    std::uint64_t dataset_seed = 7;
    std::size_t n_train = 1000;
    std::size_t n_test = 1000;
    double noise = 0.2;
    std::string dataset_path = ".";
    std::vector<std::string> train_files;  // empty -> canonical names
    std::vector<std::string> test_files;
    std::size_t limit_train = 0;  // 0 = no limit
    std::size_t limit_test = 0;
    std::optional<bool> normalize;  // default: cifar yes, twomoon no
    std::size_t channels = 3;

    // model
    std::vector<std::size_t> hidden = {64, 64};

    // training
    std::size_t epochs = 100;
    std::size_t batch_size = 100;
    double lr = 0.1;
    std::vector<std::size_t> lr_milestones;
    double lr_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::string loss = "logistic";
    double loss_clip = 10.0;
    bool flip = false;
    bool crop = false;
    std::size_t crop_pad = 4;

    SeedBundle seeds;

    // mixup
    double mixup_alpha = 1.0;
    bool mixup_per_example = true;
    bool mixup_min_trick = true;
    std::optional<double> mixup_force_lambda;

    // kernel
    double kernel_h = 0.1;
    std::size_t kernel_n_train = 1;
    std::optional<std::size_t> kernel_n_eval;  // default: n_train
    bool kernel_antithetic = false;
    std::uint64_t kernel_eval_seed = 97;

    // attack
    std::string attack_kind = "FGSM";
    double attack_epsilon = 0.031;
    std::size_t attack_iterations = 10;
    double attack_step = 0.0;
    std::string attack_threat = "white";
    std::string attack_source_checkpoint;
    std::optional<double> attack_box_lo, attack_box_hi;
    bool attack_use_data_box = false;
    bool attack_target_kcm = true;
    bool attack_resample_offsets = false;
    std::uint64_t attack_seed = 1234;

    // contour
    std::size_t contour_resolution = 100;
    double contour_x1_min = -1.5, contour_x1_max = 2.5;
    double contour_x2_min = -1.0, contour_x2_max = 1.5;

    // sweep
    std::vector<double> sweep_h = {0.0, 0.05, 0.5};
    std::vector<double> sweep_lambda = {0.0, 0.1};

    // rademacher
    std::string rademacher_kind = "linear";
    std::size_t rademacher_n = 8;
    std::size_t rademacher_d = 2;
    double rademacher_radius = 1.0;
    std::string rademacher_method = "exhaustive";
    std::size_t rademacher_m = 100000;
    std::uint64_t rademacher_seed = 11;
    std::size_t rademacher_sign_draws = 32;
    std::size_t rademacher_ascent_steps = 50;
    double rademacher_ascent_rate = 0.05;
    std::vector<double> rademacher_radii = {2.0, 1.5};
    std::vector<std::size_t> rademacher_hidden = {8};

    std::string resolved_out_dir() const;
    std::string artifact_path(const std::string& name) const;

    TrainConfig to_train_config() const;
    AttackConfig to_attack_config() const;
    bool wants_normalization() const;
};

// Applies one key/value pair; ConfigError on unknown key or bad value.
void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Parses a config file into cfg (later keys override earlier ones).
void config_load_file(ExperimentConfig& cfg, const std::string& path);

// One "key  default  description" line per schema entry.
std::string config_schema_help();

bool config_has_key(const std::string& key);

// Datasets resolved from the config (train, test).
struct LoadedData {
    Dataset train;
    Dataset test;
};
LoadedData load_datasets(const ExperimentConfig& cfg);

// Model dims implied by config + data: input dim, hidden sizes, output width.
std::vector<std::size_t> model_dims(const ExperimentConfig& cfg, const Dataset& data);

}  // namespace kcm
