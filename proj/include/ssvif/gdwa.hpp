#pragma once

// Stage-II task weighting. GDWA combines normalized per-task gradient norms
// over the shared fusion parameters with softmax-tempered loss descent rates;
// DWA uses the descent rates alone; fixed returns a constant.
// Task A is the fusion loss, task B the CSC loss.

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "ssvif/errors.hpp"

namespace ssvif {

enum class SchedulerKind { gdwa, dwa, fixed };

const char* to_string(SchedulerKind k);
SchedulerKind scheduler_from_string(const std::string& s);

struct GdwaConfig {
    SchedulerKind kind = SchedulerKind::gdwa;
    double temperature = 2.0;
    double fixed_wcsc = 0.1;
    double clamp_lo = 0.01;
    double clamp_hi = 100.0;
};

struct GdwaWeights {
    double lambda_a = 0.5;
    double lambda_b = 0.5;
    double omega_csc = 1.0;
};

class GdwaState {
public:
    explicit GdwaState(const GdwaConfig& cfg);

    /// Records one optimization step's statistics (epoch-mean accumulation).
    void accumulate_step(double grad_norm_fusion, double grad_norm_csc, double loss_fusion,
                         double loss_csc);
    /// Loss-only accumulation for steps where gradient norms are not sampled.
    void accumulate_losses(double loss_fusion, double loss_csc);
    void accumulate_norms(double grad_norm_fusion, double grad_norm_csc);

    /// Epoch-end update for the configured scheduler; returns the clamped
    /// omega_csc to use next epoch and resets the accumulators.
    double end_of_epoch_update();

    double omega_csc() const { return weights_.omega_csc; }
    const GdwaWeights& weights() const { return weights_; }
    int epoch_index() const { return epoch_index_; }
    const GdwaConfig& config() const { return cfg_; }

    double mean_norm_fusion() const;
    double mean_norm_csc() const;
    double mean_loss_fusion() const;
    double mean_loss_csc() const;

    // state persistence for checkpoints
    std::map<std::string, std::string> to_meta() const;
    static GdwaState from_meta(const GdwaConfig& cfg,
                               const std::map<std::string, std::string>& meta);

private:
    double gdwa_update();
    double dwa_update();

    GdwaConfig cfg_;
    GdwaWeights weights_;
    int epoch_index_ = 0;

    double sum_norm_a_ = 0.0, sum_norm_b_ = 0.0;
    int64_t norm_samples_ = 0;
    double sum_loss_a_ = 0.0, sum_loss_b_ = 0.0;
    int64_t loss_samples_ = 0;
    std::optional<double> prev_loss_a_, prev_loss_b_;
};

/// The bare formula chain, exposed for tests: returns weights given
/// epoch-mean gradient norms g and descent rates r at temperature T.
GdwaWeights gdwa_weights(double g_a, double g_b, double r_a, double r_b, double temperature);

/// DWA convention: lambda_k proportional to exp(r_k/T), scaled to sum to the
/// task count; omega is the ratio lambda_b / lambda_a.
GdwaWeights dwa_weights(double r_a, double r_b, double temperature);

} // namespace ssvif
