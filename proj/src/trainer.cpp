#include "ssvif/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ssvif/losses.hpp"
#include "ssvif/rng.hpp"

namespace fs = std::filesystem;

namespace ssvif {

namespace {

constexpr uint64_t kShuffleTag = 0x5f0f;
constexpr uint64_t kCropTag = 0xc909;

std::array<double, 4> lambdas(const Config& c) {
    return {c.lambda1, c.lambda2, c.lambda3, c.lambda4};
}

void check_finite_loss(double v) {
    if (!std::isfinite(v)) throw DivergenceError("trainer: non-finite loss, aborting");
}

} // namespace

bool stage1_should_switch(const std::vector<double>& h, int stage1_cap) {
    const size_t j = h.size();
    if (j >= 2 && h[j - 1] > h[j - 2]) return true;
    return int(j) >= stage1_cap;
}

// --- Adam -------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const ParamRegistry& reg, AdamConfig cfg) : cfg_(cfg) {
    slots_.resize(reg.size());
    for (size_t i = 0; i < reg.size(); ++i) {
        const size_t n = size_t(reg.entries()[i].tensor.numel());
        slots_[i].m.assign(n, 0.0f);
        slots_[i].v.assign(n, 0.0f);
    }
}

void AdamOptimizer::step(ParamRegistry& reg, std::span<const ParamGroup> groups, double lr) {
    for (ParamGroup g : groups) ++step_count_[size_t(g)];
    for (size_t i = 0; i < reg.size(); ++i) {
        const auto& entry = reg.entries()[i];
        if (!ParamRegistry::in_groups(entry.group, groups)) continue;
        Tensor t = entry.tensor;
        if (!t.has_grad()) {
            throw ContractError("adam: parameter " + entry.name + " has no gradient");
        }
        const int64_t step = step_count_[size_t(entry.group)];
        const float bc1 = float(1.0 - std::pow(cfg_.beta1, double(step)));
        const float bc2 = float(1.0 - std::pow(cfg_.beta2, double(step)));
        const float b1 = float(cfg_.beta1), b2 = float(cfg_.beta2);
        const float lrf = float(lr), epsf = float(cfg_.eps);
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        auto& p = t.mutable_values();
        const auto& g = t.grad();
        for (size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            const float mhat = m[k] / bc1;
            const float vhat = v[k] / bc2;
            p[k] -= lrf * mhat / (std::sqrt(vhat) + epsf);
        }
        t.zero_grad();
    }
}

void AdamOptimizer::append_to_checkpoint(Checkpoint& ckpt, const ParamRegistry& reg) const {
    for (size_t i = 0; i < reg.size(); ++i) {
        const auto& e = reg.entries()[i];
        ckpt.tensors.push_back({"adam.m." + e.name, e.tensor.shape(), slots_[i].m});
        ckpt.tensors.push_back({"adam.v." + e.name, e.tensor.shape(), slots_[i].v});
    }
    for (ParamGroup g : kAllGroups) {
        ckpt.meta["adam.steps." + std::string(to_string(g))] =
            std::to_string(step_count_[size_t(g)]);
    }
}

void AdamOptimizer::restore_from_checkpoint(const Checkpoint& ckpt, const ParamRegistry& reg) {
    for (size_t i = 0; i < reg.size(); ++i) {
        const auto& e = reg.entries()[i];
        slots_[i].m = ckpt.tensor("adam.m." + e.name).data;
        slots_[i].v = ckpt.tensor("adam.v." + e.name).data;
        if (int64_t(slots_[i].m.size()) != e.tensor.numel()) {
            throw IoError("adam: moment size mismatch for " + e.name);
        }
    }
    for (ParamGroup g : kAllGroups) {
        step_count_[size_t(g)] =
            std::stoll(ckpt.meta_at("adam.steps." + std::string(to_string(g))));
    }
}

// --- trainer ------------------------------------------------------------------

Trainer::Trainer(const Config& cfg) : cfg_(cfg), gdwa_(cfg.gdwa_config()) {
    cfg_.validate();
    fusion_ = std::make_unique<FusionModel>(reg_);
    if (cfg_.csc_enabled) {
        head_ = std::make_unique<SegHead>(reg_, cfg_.n_classes);
        seg_model_ = std::make_unique<SegModel>(reg_, cfg_.n_classes);
    }
    adam_ = std::make_unique<AdamOptimizer>(reg_);
    if (!cfg_.two_stage) {
        stage_ = 2;
    }
    load_dataset();
}

void Trainer::load_dataset() {
    auto ids = scan_dataset(cfg_.dataset_root);
    if (ids.empty()) throw ConfigError("trainer: dataset at " + cfg_.dataset_root + " is empty");
    auto split = split_dataset(ids, cfg_.seed);
    for (const auto& id : split.train) train_pairs_.push_back(load_pair(cfg_.dataset_root, id));
    for (const auto& id : split.val) val_pairs_.push_back(load_pair(cfg_.dataset_root, id));
    for (const auto& p : train_pairs_) {
        if (cfg_.crop > std::min(p.height(), p.width())) {
            throw ConfigError("trainer: crop " + std::to_string(cfg_.crop) + " exceeds image " +
                              p.id);
        }
    }
}

Trainer::BatchStats Trainer::step_stage1(const std::vector<ImagePair>& batch) {
    reg_.zero_grad();
    const double inv = 1.0 / double(batch.size());
    Tensor total;
    BatchStats stats;
    for (const auto& pair : batch) {
        auto out = fusion_->forward(pair.ir, pair.vis);
        auto terms = fusion_loss(out.fused, pair.ir, pair.vis, lambdas(cfg_));
        stats.l_int += terms.l_int.item() * inv;
        stats.l_grad += terms.l_grad.item() * inv;
        stats.l_ssim += terms.l_ssim.item() * inv;
        stats.l_color += terms.l_color.item() * inv;
        total = total.defined() ? add(total, terms.total) : terms.total;
    }
    Tensor loss = scalar_mul(total, inv);
    stats.l_fusion = loss.item();
    check_finite_loss(stats.l_fusion);
    backward(loss);
    adam_->step(reg_, kSharedGroups, cfg_.lr);
    return stats;
}

Trainer::BatchStats Trainer::step_stage2(const std::vector<ImagePair>& batch, int step_in_epoch) {
    reg_.zero_grad();
    const double inv = 1.0 / double(batch.size());
    const double omega = cfg_.csc_enabled ? gdwa_.omega_csc() : 0.0;
    BatchStats stats;
    Tensor fusion_total, csc_total;
    for (const auto& pair : batch) {
        // one backbone evaluation feeds both the decoder and the head
        Tensor feats = fusion_->backbone_forward(pair.ir, pair.vis);
        Tensor fused = fusion_->decoder_forward(feats);
        auto terms = fusion_loss(fused, pair.ir, pair.vis, lambdas(cfg_));
        stats.l_int += terms.l_int.item() * inv;
        stats.l_grad += terms.l_grad.item() * inv;
        stats.l_ssim += terms.l_ssim.item() * inv;
        stats.l_color += terms.l_color.item() * inv;
        fusion_total = fusion_total.defined() ? add(fusion_total, terms.total) : terms.total;
        if (cfg_.csc_enabled) {
            SegPrediction pa = head_->forward(feats);
            SegPrediction pb = seg_model_->forward(fused);
            auto csc = csc_loss(pa, pb, cfg_.loss_options());
            csc_total = csc_total.defined() ? add(csc_total, csc.l_csc) : csc.l_csc;
        }
    }
    Tensor l_fusion = scalar_mul(fusion_total, inv);
    stats.l_fusion = l_fusion.item();
    check_finite_loss(stats.l_fusion);

    if (!cfg_.csc_enabled) {
        backward(l_fusion);
        adam_->step(reg_, kSharedGroups, cfg_.lr);
        return stats;
    }

    Tensor l_csc = scalar_mul(csc_total, inv);
    stats.l_csc = l_csc.item();
    check_finite_loss(stats.l_csc);

    const bool sample_norms =
        (cfg_.scheduler == SchedulerKind::gdwa || force_sampling_) &&
        (step_in_epoch % cfg_.gdwa_norm_sample_every == 0);
    ++stage2_step_counter_;
    if (sample_norms) {
        // two isolated backward passes give the per-task gradients over the
        // shared parameters; their weighted sum drives the Adam step
        backward(l_fusion);
        auto gf_shared = reg_.flatten_grads(kSharedGroups);
        auto gf_all = reg_.snapshot_grads();
        double norm_f = 0.0;
        for (float g : gf_shared) norm_f += double(g) * double(g);
        reg_.zero_grad();
        backward(l_csc);
        auto gc_shared = reg_.flatten_grads(kSharedGroups);
        auto gc_all = reg_.snapshot_grads();
        double norm_c = 0.0;
        for (float g : gc_shared) norm_c += double(g) * double(g);
        projection_.add(stage2_step_counter_, gc_shared, gf_shared);
        gdwa_.accumulate_norms(std::sqrt(norm_f), std::sqrt(norm_c));
        const float w = float(omega);
        for (size_t i = 0; i < reg_.size(); ++i) {
            Tensor t = reg_.entries()[i].tensor;
            auto& grad = t.mutable_grad();
            const auto& gf = gf_all[i];
            const auto& gc = gc_all[i];
            for (size_t k = 0; k < grad.size(); ++k) grad[k] = gf[k] + w * gc[k];
        }
    } else {
        backward(add(l_fusion, scalar_mul(l_csc, omega)));
    }
    gdwa_.accumulate_losses(stats.l_fusion, stats.l_csc);
    adam_->step(reg_, kAllGroups, cfg_.lr);
    return stats;
}

double Trainer::validate(int stage, double omega, double* agreement_out) const {
    NoGradGuard ng;
    double total = 0.0;
    int64_t agree = 0, pixels = 0;
    for (const auto& pair : val_pairs_) {
        ImagePair crop = center_crop_pair(pair, cfg_.crop);
        Tensor feats = fusion_->backbone_forward(crop.ir, crop.vis);
        Tensor fused = fusion_->decoder_forward(feats);
        auto terms = fusion_loss(fused, crop.ir, crop.vis, lambdas(cfg_));
        double loss = terms.total.item();
        if (stage == 2 && cfg_.csc_enabled) {
            SegPrediction pa = head_->forward(feats);
            SegPrediction pb = seg_model_->forward(fused);
            auto csc = csc_loss(pa, pb, cfg_.loss_options());
            loss += omega * csc.l_csc.item();
            const int n = cfg_.n_classes;
            const int64_t hw = int64_t(cfg_.crop) * cfg_.crop;
            const auto& a = pa.probs.values();
            const auto& b = pb.probs.values();
            for (int64_t p = 0; p < hw; ++p) {
                int arg_a = 0, arg_b = 0;
                float ma = a[size_t(p)], mb = b[size_t(p)];
                for (int c = 1; c < n; ++c) {
                    if (a[size_t(c * hw + p)] > ma) {
                        ma = a[size_t(c * hw + p)];
                        arg_a = c;
                    }
                    if (b[size_t(c * hw + p)] > mb) {
                        mb = b[size_t(c * hw + p)];
                        arg_b = c;
                    }
                }
                agree += arg_a == arg_b ? 1 : 0;
            }
            pixels += hw;
        }
        total += loss;
    }
    if (agreement_out) *agreement_out = pixels > 0 ? double(agree) / double(pixels) : -1.0;
    return total / double(val_pairs_.size());
}

void Trainer::save_state(const std::string& path) const {
    Checkpoint ckpt;
    append_registry_tensors(ckpt, reg_);
    adam_->append_to_checkpoint(ckpt, reg_);
    for (const auto& [k, v] : gdwa_.to_meta()) ckpt.meta[k] = v;
    ckpt.meta["train.stage"] = std::to_string(stage_);
    ckpt.meta["train.epochs_done"] = std::to_string(epochs_done_);
    ckpt.meta["train.switch_epoch"] = std::to_string(switch_epoch_);
    ckpt.meta["train.best_val"] = format_exact(best_val_);
    ckpt.meta["train.has_best"] = has_best_ ? "1" : "0";
    ckpt.meta["train.patience_counter"] = std::to_string(patience_counter_);
    ckpt.meta["train.best_epoch"] = std::to_string(best_epoch_);
    ckpt.meta["train.stage2_steps"] = std::to_string(stage2_step_counter_);
    ckpt.meta["train.seed"] = std::to_string(cfg_.seed);
    ckpt.meta["train.n_classes"] = std::to_string(cfg_.n_classes);
    ckpt.meta["train.rng"] = "derived(seed,epoch)";
    ckpt.meta["train.has_prev_fusion"] = prev_fusion_train_mean_ ? "1" : "0";
    if (prev_fusion_train_mean_) {
        ckpt.meta["train.prev_fusion_mean"] = format_exact(*prev_fusion_train_mean_);
    }
    save_checkpoint_file(ckpt, path);
}

void Trainer::restore_state(const std::string& path) {
    Checkpoint ckpt = load_checkpoint_file(path);
    restore_registry_tensors(ckpt, reg_);
    adam_->restore_from_checkpoint(ckpt, reg_);
    gdwa_ = GdwaState::from_meta(cfg_.gdwa_config(), ckpt.meta);
    stage_ = std::stoi(ckpt.meta_at("train.stage"));
    epochs_done_ = std::stoi(ckpt.meta_at("train.epochs_done"));
    switch_epoch_ = std::stoi(ckpt.meta_at("train.switch_epoch"));
    best_val_ = parse_exact(ckpt.meta_at("train.best_val"));
    has_best_ = ckpt.meta_at("train.has_best") == "1";
    patience_counter_ = std::stoi(ckpt.meta_at("train.patience_counter"));
    best_epoch_ = std::stoi(ckpt.meta_at("train.best_epoch"));
    stage2_step_counter_ = std::stoll(ckpt.meta_at("train.stage2_steps"));
    if (ckpt.meta_at("train.has_prev_fusion") == "1") {
        prev_fusion_train_mean_ = parse_exact(ckpt.meta_at("train.prev_fusion_mean"));
    }
    if (std::stoull(ckpt.meta_at("train.seed")) != cfg_.seed) {
        throw ConfigError("trainer: resume seed differs from config seed");
    }
}

TrainResult Trainer::run(const std::optional<std::string>& resume_checkpoint) {
    fs::create_directories(cfg_.out_dir);
    const std::string metrics_path = (fs::path(cfg_.out_dir) / "metrics.log").string();
    const std::string best_path = (fs::path(cfg_.out_dir) / "best.ckpt").string();
    const std::string last_path = (fs::path(cfg_.out_dir) / "last.ckpt").string();

    if (resume_checkpoint) {
        restore_state(*resume_checkpoint);
    } else {
        init_params(reg_, cfg_.seed);
    }

    std::ofstream log(metrics_path, resume_checkpoint ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("trainer: cannot open " + metrics_path);
    if (!resume_checkpoint) {
        std::istringstream echo(cfg_.echo());
        std::string line;
        while (std::getline(echo, line)) log << "# " << line << "\n";
    }

    TrainResult result;
    result.switch_epoch = switch_epoch_;

    for (int epoch = epochs_done_ + 1; epoch <= cfg_.max_epochs; ++epoch) {
        // deterministic per-epoch streams
        Rng shuffle_rng(mix64(cfg_.seed, uint64_t(epoch), kShuffleTag));
        Rng crop_rng(mix64(cfg_.seed, uint64_t(epoch), kCropTag));
        std::vector<size_t> order(train_pairs_.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.stage = stage_;
        rec.w_csc = (stage_ == 2 && cfg_.csc_enabled) ? gdwa_.omega_csc() : 0.0;
        const size_t proj_before = projection_.records.size();

        int step_in_epoch = 0;
        int steps = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg_.batch_size)) {
            std::vector<ImagePair> batch;
            const size_t end = std::min(order.size(), start + size_t(cfg_.batch_size));
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                batch.push_back(random_crop_pair(train_pairs_[order[i]], cfg_.crop, crop_rng));
            }
            BatchStats s =
                stage_ == 1 ? step_stage1(batch) : step_stage2(batch, step_in_epoch);
            rec.l_int += s.l_int;
            rec.l_grad += s.l_grad;
            rec.l_ssim += s.l_ssim;
            rec.l_color += s.l_color;
            rec.l_fusion += s.l_fusion;
            rec.l_csc += s.l_csc;
            ++step_in_epoch;
            ++steps;
        }
        const double inv_steps = 1.0 / double(steps);
        rec.l_int *= inv_steps;
        rec.l_grad *= inv_steps;
        rec.l_ssim *= inv_steps;
        rec.l_color *= inv_steps;
        rec.l_fusion *= inv_steps;
        rec.l_csc *= inv_steps;
        rec.l_total = rec.l_fusion + rec.w_csc * rec.l_csc;

        double alpha_sum = 0.0;
        int64_t alpha_n = 0;
        for (size_t i = proj_before; i < projection_.records.size(); ++i) {
            if (!projection_.records[i].skipped) {
                alpha_sum += projection_.records[i].alpha_cf;
                ++alpha_n;
            }
        }
        rec.alpha_cf_mean = alpha_n ? alpha_sum / double(alpha_n) : 0.0;

        // stage switch on the training fusion-loss means: first strict
        // increase over the previous epoch, or the stage cap
        bool switched_now = false;
        if (stage_ == 1 && cfg_.two_stage) {
            switched_now =
                (prev_fusion_train_mean_ && rec.l_fusion > *prev_fusion_train_mean_) ||
                epoch >= cfg_.stage1_cap;
        }
        prev_fusion_train_mean_ = rec.l_fusion;

        double agreement = -1.0;
        rec.val_total = validate(stage_, rec.w_csc, &agreement);
        rec.val_agreement = agreement;

        // scheduler update feeds the next epoch's omega
        if (stage_ == 2 && cfg_.csc_enabled) {
            gdwa_.end_of_epoch_update();
        }

        const bool improved = !has_best_ || rec.val_total < best_val_;
        if (improved) {
            best_val_ = rec.val_total;
            has_best_ = true;
            patience_counter_ = 0;
            best_epoch_ = epoch;
        } else {
            ++patience_counter_;
        }
        epochs_done_ = epoch;
        if (switched_now) {
            stage_ = 2;
            switch_epoch_ = epoch;
            result.switched = true;
            result.switch_epoch = epoch;
            // the early-stopping objective changes definition at the switch
            has_best_ = false;
            best_val_ = 0.0;
            patience_counter_ = 0;
        }
        if (improved) save_state(best_path);
        save_state(last_path);

        char line[512];
        std::snprintf(line, sizeof(line),
                      "%d\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f",
                      rec.epoch, rec.stage == 1 ? "I" : "II", rec.l_int, rec.l_grad, rec.l_ssim,
                      rec.l_color, rec.l_fusion, rec.l_csc, rec.w_csc, rec.l_total, rec.val_total,
                      rec.alpha_cf_mean);
        log << line << "\n";
        log.flush();
        std::printf("epoch %3d stage %-2s l_fusion %.4f l_csc %.4f w_csc %.4f val %.4f\n",
                    rec.epoch, rec.stage == 1 ? "I" : "II", rec.l_fusion, rec.l_csc, rec.w_csc,
                    rec.val_total);
        std::fflush(stdout);

        result.epochs.push_back(rec);
        if (patience_counter_ >= cfg_.patience) {
            result.early_stopped = true;
            break;
        }
    }

    if (!projection_.records.empty()) {
        auto s = summarize(projection_);
        log << "# projection mean_alpha=" << format_exact(s.mean_alpha)
            << " mean_cos=" << format_exact(s.mean_cos)
            << " conflict_fraction=" << format_exact(s.conflict_fraction) << " count=" << s.count
            << "\n";
    }

    result.projection = projection_;
    result.best_epoch = best_epoch_;
    result.best_val = best_val_;
    result.best_checkpoint = has_best_ || best_epoch_ > 0 ? best_path : "";
    result.last_checkpoint = last_path;
    if (result.switch_epoch == 0) result.switch_epoch = switch_epoch_;
    return result;
}

} // namespace ssvif
