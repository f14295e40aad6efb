#pragma once

// Two-stage training loop: Stage I trains the fusion model on the fusion
// loss alone; once the epoch-mean fusion loss first increases (or the stage
// cap is reached) Stage II jointly trains all networks on
// L_fusion + omega_csc * L_csc with the configured weight scheduler.

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssvif/checkpoint.hpp"
#include "ssvif/config.hpp"
#include "ssvif/diagnostics.hpp"
#include "ssvif/gdwa.hpp"
#include "ssvif/imageio.hpp"
#include "ssvif/models.hpp"
#include "ssvif/registry.hpp"

namespace ssvif {

/// True when Stage I ends after the epoch whose mean closes the history:
/// first strict increase of the epoch-mean fusion loss, or the cap.
bool stage1_should_switch(const std::vector<double>& fusion_epoch_means, int stage1_cap);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(const ParamRegistry& reg, AdamConfig cfg = {});

    /// One Adam step over the listed groups; grads are cleared afterwards.
    /// Throws ContractError when a listed parameter has no populated grad.
    void step(ParamRegistry& reg, std::span<const ParamGroup> groups, double lr);

    int64_t steps_taken(ParamGroup g) const { return step_count_[size_t(g)]; }

    void append_to_checkpoint(Checkpoint& ckpt, const ParamRegistry& reg) const;
    void restore_from_checkpoint(const Checkpoint& ckpt, const ParamRegistry& reg);

private:
    AdamConfig cfg_;
    struct Slot {
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    std::array<int64_t, 4> step_count_{};
};

struct EpochRecord {
    int epoch = 0;
    int stage = 1;
    double l_int = 0, l_grad = 0, l_ssim = 0, l_color = 0, l_fusion = 0;
    double l_csc = 0, w_csc = 0, l_total = 0;
    double val_total = 0;
    double alpha_cf_mean = 0;   // mean over this epoch's sampled steps, 0 if none
    double val_agreement = -1;  // pixel agreement of the two branches, -1 if n/a
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    ProjectionReport projection;
    int switch_epoch = 0; // last Stage-I epoch; 0 when training started in Stage II
    int best_epoch = 0;
    double best_val = 0.0;
    bool early_stopped = false;
    bool switched = false;
    std::string best_checkpoint;
    std::string last_checkpoint;
};

class Trainer {
public:
    explicit Trainer(const Config& cfg);

    TrainResult run(const std::optional<std::string>& resume_checkpoint = std::nullopt);

    /// Diagnose mode: sample gradient norms and projections every step
    /// regardless of the scheduler.
    void force_norm_sampling(bool on) { force_sampling_ = on; }

    const ParamRegistry& registry() const { return reg_; }

private:
    struct BatchStats {
        double l_int = 0, l_grad = 0, l_ssim = 0, l_color = 0, l_fusion = 0, l_csc = 0;
    };

    void load_dataset();
    BatchStats step_stage1(const std::vector<ImagePair>& batch);
    BatchStats step_stage2(const std::vector<ImagePair>& batch, int step_in_epoch);
    double validate(int stage, double omega, double* agreement_out) const;
    void save_state(const std::string& path) const;
    void restore_state(const std::string& path);

    Config cfg_;
    ParamRegistry reg_;
    std::unique_ptr<FusionModel> fusion_;
    std::unique_ptr<SegHead> head_;
    std::unique_ptr<SegModel> seg_model_;
    std::unique_ptr<AdamOptimizer> adam_;
    GdwaState gdwa_;
    ProjectionReport projection_;
    std::vector<ImagePair> train_pairs_;
    std::vector<ImagePair> val_pairs_;

    // mutable training state (persisted in checkpoints)
    int stage_ = 1;
    int epochs_done_ = 0;
    int switch_epoch_ = 0;
    double best_val_ = 0.0;
    bool has_best_ = false;
    int patience_counter_ = 0;
    int best_epoch_ = 0;
    std::optional<double> prev_fusion_train_mean_;
    int64_t stage2_step_counter_ = 0;

    bool force_sampling_ = false;
};

} // namespace ssvif
