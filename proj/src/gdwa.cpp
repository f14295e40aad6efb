#include "ssvif/gdwa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ssvif/checkpoint.hpp"

namespace ssvif {

const char* to_string(SchedulerKind k) {
    switch (k) {
        case SchedulerKind::gdwa: return "gdwa";
        case SchedulerKind::dwa: return "dwa";
        case SchedulerKind::fixed: return "fixed";
    }
    return "?";
}

SchedulerKind scheduler_from_string(const std::string& s) {
    if (s == "gdwa") return SchedulerKind::gdwa;
    if (s == "dwa") return SchedulerKind::dwa;
    if (s == "fixed") return SchedulerKind::fixed;
    throw ConfigError("unknown scheduler '" + s + "' (expected gdwa|dwa|fixed)");
}

GdwaWeights gdwa_weights(double g_a, double g_b, double r_a, double r_b, double temperature) {
    double gt_a;
    if (g_a + g_b <= 0.0) {
        std::fprintf(stderr, "gdwa: zero gradient norms, falling back to equal weighting\n");
        gt_a = 0.5;
    } else {
        gt_a = g_a / (g_a + g_b);
    }
    const double gt_b = 1.0 - gt_a;
    const double ea = std::exp(r_a / temperature);
    const double eb = std::exp(r_b / temperature);
    const double s_a = ea / (ea + eb);
    const double s_b = 1.0 - s_a;
    GdwaWeights w;
    const double za = gt_a * s_a, zb = gt_b * s_b;
    if (za + zb <= 0.0) {
        w.lambda_a = 0.5;
        w.lambda_b = 0.5;
    } else {
        w.lambda_a = za / (za + zb);
        w.lambda_b = 1.0 - w.lambda_a;
    }
    w.omega_csc = w.lambda_b / w.lambda_a;
    return w;
}

GdwaWeights dwa_weights(double r_a, double r_b, double temperature) {
    const double ea = std::exp(r_a / temperature);
    const double eb = std::exp(r_b / temperature);
    GdwaWeights w;
    w.lambda_a = 2.0 * ea / (ea + eb);
    w.lambda_b = 2.0 * eb / (ea + eb);
    w.omega_csc = w.lambda_b / w.lambda_a;
    return w;
}

GdwaState::GdwaState(const GdwaConfig& cfg) : cfg_(cfg) {
    if (cfg.temperature <= 0.0) throw ConfigError("gdwa: temperature must be positive");
    if (cfg.kind == SchedulerKind::fixed && cfg.fixed_wcsc <= 0.0) {
        throw ConfigError("gdwa: fixed_wcsc must be positive");
    }
    if (cfg.kind == SchedulerKind::fixed) {
        weights_.omega_csc = cfg.fixed_wcsc;
    }
}

namespace {

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw DivergenceError(std::string("gdwa: non-finite ") + what + " encountered");
    }
}

} // namespace

void GdwaState::accumulate_norms(double grad_norm_fusion, double grad_norm_csc) {
    check_finite(grad_norm_fusion, "gradient norm");
    check_finite(grad_norm_csc, "gradient norm");
    if (grad_norm_fusion < 0.0 || grad_norm_csc < 0.0) {
        throw ContractError("gdwa: gradient norms must be nonnegative");
    }
    sum_norm_a_ += grad_norm_fusion;
    sum_norm_b_ += grad_norm_csc;
    ++norm_samples_;
}

void GdwaState::accumulate_losses(double loss_fusion, double loss_csc) {
    check_finite(loss_fusion, "loss");
    check_finite(loss_csc, "loss");
    sum_loss_a_ += loss_fusion;
    sum_loss_b_ += loss_csc;
    ++loss_samples_;
}

void GdwaState::accumulate_step(double grad_norm_fusion, double grad_norm_csc, double loss_fusion,
                                double loss_csc) {
    accumulate_norms(grad_norm_fusion, grad_norm_csc);
    accumulate_losses(loss_fusion, loss_csc);
}

double GdwaState::mean_norm_fusion() const {
    return norm_samples_ ? sum_norm_a_ / double(norm_samples_) : 0.0;
}
double GdwaState::mean_norm_csc() const {
    return norm_samples_ ? sum_norm_b_ / double(norm_samples_) : 0.0;
}
double GdwaState::mean_loss_fusion() const {
    return loss_samples_ ? sum_loss_a_ / double(loss_samples_) : 0.0;
}
double GdwaState::mean_loss_csc() const {
    return loss_samples_ ? sum_loss_b_ / double(loss_samples_) : 0.0;
}

double GdwaState::gdwa_update() {
    const double r_a = prev_loss_a_ ? mean_loss_fusion() / *prev_loss_a_ : 1.0;
    const double r_b = prev_loss_b_ ? mean_loss_csc() / *prev_loss_b_ : 1.0;
    weights_ = gdwa_weights(mean_norm_fusion(), mean_norm_csc(), r_a, r_b, cfg_.temperature);
    return weights_.omega_csc;
}

double GdwaState::dwa_update() {
    const double r_a = prev_loss_a_ ? mean_loss_fusion() / *prev_loss_a_ : 1.0;
    const double r_b = prev_loss_b_ ? mean_loss_csc() / *prev_loss_b_ : 1.0;
    weights_ = dwa_weights(r_a, r_b, cfg_.temperature);
    return weights_.omega_csc;
}

double GdwaState::end_of_epoch_update() {
    if (loss_samples_ == 0) {
        throw ContractError("gdwa: end_of_epoch_update without accumulated steps");
    }
    switch (cfg_.kind) {
        case SchedulerKind::gdwa: gdwa_update(); break;
        case SchedulerKind::dwa: dwa_update(); break;
        case SchedulerKind::fixed:
            weights_.lambda_a = 1.0 / (1.0 + cfg_.fixed_wcsc);
            weights_.lambda_b = 1.0 - weights_.lambda_a;
            weights_.omega_csc = cfg_.fixed_wcsc;
            break;
    }
    weights_.omega_csc = std::clamp(weights_.omega_csc, cfg_.clamp_lo, cfg_.clamp_hi);
    prev_loss_a_ = mean_loss_fusion();
    prev_loss_b_ = mean_loss_csc();
    sum_norm_a_ = sum_norm_b_ = 0.0;
    norm_samples_ = 0;
    sum_loss_a_ = sum_loss_b_ = 0.0;
    loss_samples_ = 0;
    ++epoch_index_;
    return weights_.omega_csc;
}

std::map<std::string, std::string> GdwaState::to_meta() const {
    std::map<std::string, std::string> m;
    m["gdwa.epoch_index"] = std::to_string(epoch_index_);
    m["gdwa.omega_csc"] = format_exact(weights_.omega_csc);
    m["gdwa.lambda_a"] = format_exact(weights_.lambda_a);
    m["gdwa.lambda_b"] = format_exact(weights_.lambda_b);
    m["gdwa.has_prev"] = prev_loss_a_ ? "1" : "0";
    if (prev_loss_a_) {
        m["gdwa.prev_loss_a"] = format_exact(*prev_loss_a_);
        m["gdwa.prev_loss_b"] = format_exact(*prev_loss_b_);
    }
    return m;
}

GdwaState GdwaState::from_meta(const GdwaConfig& cfg,
                               const std::map<std::string, std::string>& meta) {
    GdwaState st(cfg);
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = meta.find(k);
        if (it == meta.end()) throw IoError("gdwa: missing meta key " + k);
        return it->second;
    };
    st.epoch_index_ = std::stoi(need("gdwa.epoch_index"));
    st.weights_.omega_csc = parse_exact(need("gdwa.omega_csc"));
    st.weights_.lambda_a = parse_exact(need("gdwa.lambda_a"));
    st.weights_.lambda_b = parse_exact(need("gdwa.lambda_b"));
    if (need("gdwa.has_prev") == "1") {
        st.prev_loss_a_ = parse_exact(need("gdwa.prev_loss_a"));
        st.prev_loss_b_ = parse_exact(need("gdwa.prev_loss_b"));
    }
    return st;
}

} // namespace ssvif
