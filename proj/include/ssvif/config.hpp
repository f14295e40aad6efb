#pragma once

// Flat `key = value` configuration with `#` comments. Unknown keys are
// errors; missing keys take the documented defaults.

#include <cstdint>
#include <string>

#include "ssvif/gdwa.hpp"
#include "ssvif/losses.hpp"

namespace ssvif {

struct Config {
    std::string dataset_root;
    std::string out_dir = "out";
    uint64_t seed = 7;
    int n_classes = 15;
    double lambda1 = 20.0;
    double lambda2 = 20.0;
    double lambda3 = 10.0;
    double lambda4 = 20.0;
    double lr = 1e-4;
    int batch_size = 10;
    int crop = 64;
    int max_epochs = 60;
    int patience = 10;
    int stage1_cap = 20;
    SchedulerKind scheduler = SchedulerKind::gdwa;
    double gdwa_temperature = 2.0;
    double fixed_wcsc = 0.1;
    int gdwa_norm_sample_every = 4;
    bool deterministic = true;
    double dice_eps = 1e-6;
    CeNormalization ce_normalization = CeNormalization::mean;
    bool csc_enabled = true; // false reproduces the "w/o L_csc" ablation
    bool two_stage = true;   // false starts joint training at epoch 1

    LossOptions loss_options() const {
        LossOptions o;
        o.dice_eps = dice_eps;
        o.ce_normalization = ce_normalization;
        return o;
    }
    GdwaConfig gdwa_config() const {
        GdwaConfig g;
        g.kind = scheduler;
        g.temperature = gdwa_temperature;
        g.fixed_wcsc = fixed_wcsc;
        return g;
    }

    void validate() const; // throws ConfigError
    std::string echo() const; // fully resolved key = value lines
};

Config parse_config_text(const std::string& text);
Config parse_config(const std::string& path);

} // namespace ssvif
