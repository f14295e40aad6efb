// ssvif command-line tool: synthetic dataset generation, training, fusion
// inference, metric evaluation, and gradient-projection diagnostics.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ssvif/config.hpp"
#include "ssvif/diagnostics.hpp"
#include "ssvif/errors.hpp"
#include "ssvif/imageio.hpp"
#include "ssvif/metrics.hpp"
#include "ssvif/pipeline.hpp"
#include "ssvif/synthgen.hpp"
#include "ssvif/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssvif;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

int run_synth(const std::string& out, int count, uint64_t seed, int size, int classes,
              double noise) {
    SceneSpec spec;
    spec.width = size;
    spec.height = size;
    spec.n_classes = classes;
    spec.seed = seed;
    spec.noise_std = noise;
    generate(spec, count, out);
    std::printf("wrote %d scenes to %s\n", count, out.c_str());
    return 0;
}

Config load_config(const std::string& path, std::optional<uint64_t> seed_override) {
    Config cfg = parse_config(path);
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();
    return cfg;
}

int run_train(const std::string& config_path, std::optional<uint64_t> seed,
              std::optional<std::string> resume) {
    Config cfg = load_config(config_path, seed);
    Trainer trainer(cfg);
    TrainResult result = trainer.run(resume);
    std::printf("done: %zu epochs, best val %.6f at epoch %d%s\n", result.epochs.size(),
                result.best_val, result.best_epoch, result.early_stopped ? " (early stop)" : "");
    return 0;
}

int run_eval(const std::string& fused_dir, const std::string& vis_dir, const std::string& ir_dir,
             const std::string& labels_dir, const std::string& seg_ckpt, int classes,
             const std::string& out_path) {
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(fused_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") {
            ids.push_back(e.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw IoError("eval: no .ppm images in " + fused_dir);

    std::ostringstream out;
    out << "id\ten\tmi\tssim\tqabf\tdelta_e\n";
    FusionMetrics mean;
    for (const auto& id : ids) {
        Tensor fused = load_ppm((fs::path(fused_dir) / (id + ".ppm")).string());
        Tensor vis = load_ppm((fs::path(vis_dir) / (id + ".ppm")).string());
        Tensor ir1 = load_pgm((fs::path(ir_dir) / (id + ".pgm")).string());
        Tensor ir = concat_channels(ir1, concat_channels(ir1, ir1)).detach();
        FusionMetrics m = evaluate_fusion(fused, vis, ir);
        char line[256];
        std::snprintf(line, sizeof(line), "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", id.c_str(), m.en,
                      m.mi, m.ssim, m.qabf, m.delta_e);
        out << line;
        mean.en += m.en;
        mean.mi += m.mi;
        mean.ssim += m.ssim;
        mean.qabf += m.qabf;
        mean.delta_e += m.delta_e;
    }
    const double n = double(ids.size());
    char line[256];
    std::snprintf(line, sizeof(line), "mean\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", mean.en / n,
                  mean.mi / n, mean.ssim / n, mean.qabf / n, mean.delta_e / n);
    out << line;

    if (!labels_dir.empty()) {
        if (seg_ckpt.empty()) throw ConfigError("eval: --labels requires --seg-checkpoint");
        Checkpoint ckpt = load_checkpoint_file(seg_ckpt);
        std::vector<int64_t> confusion(size_t(classes) * size_t(classes), 0);
        std::vector<int> all_pred, all_gt;
        for (const auto& id : ids) {
            Tensor fused = load_ppm((fs::path(fused_dir) / (id + ".ppm")).string());
            RawImage lab = load_pnm_raw((fs::path(labels_dir) / (id + ".pgm")).string());
            std::vector<int> gt(lab.bytes.begin(), lab.bytes.end());
            std::vector<int> pred = predict_seg_model(ckpt, classes, fused);
            all_pred.insert(all_pred.end(), pred.begin(), pred.end());
            all_gt.insert(all_gt.end(), gt.begin(), gt.end());
        }
        IouReport rep = miou(all_pred, all_gt, classes);
        out << "class\tiou\n";
        for (int c = 0; c < classes; ++c) {
            char l2[64];
            std::snprintf(l2, sizeof(l2), "%d\t%.6f\n", c, rep.per_class_iou[size_t(c)]);
            out << l2;
        }
        char l3[64];
        std::snprintf(l3, sizeof(l3), "miou\t%.6f\n", rep.miou);
        out << l3;
    }

    std::cout << out.str();
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw IoError("eval: cannot write " + out_path);
        f << out.str();
    }
    return 0;
}

int run_diagnose(const std::string& config_path, std::optional<uint64_t> seed,
                 std::optional<int> max_epochs, const std::string& dump_path) {
    Config cfg = load_config(config_path, seed);
    if (max_epochs) cfg.max_epochs = *max_epochs;
    Trainer trainer(cfg);
    trainer.force_norm_sampling(true);
    TrainResult result = trainer.run();
    auto summary = summarize(result.projection);
    std::cout << to_text(summary);
    if (!dump_path.empty()) dump_records(result.projection, dump_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised visible/infrared fusion trainer"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
    std::string synth_out;
    int synth_count = 200;
    uint64_t synth_seed = 7;
    int synth_size = 64;
    int synth_classes = 4;
    double synth_noise = 0.02;
    synth->add_option("--out", synth_out, "output dataset root")->required();
    synth->add_option("--count", synth_count, "number of scenes");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--size", synth_size, "image side length");
    synth->add_option("--classes", synth_classes, "number of classes incl. background");
    synth->add_option("--noise", synth_noise, "gaussian noise sigma");

    // train
    auto* train = app.add_subcommand("train", "train on a paired dataset");
    std::string train_config;
    std::string train_resume;
    uint64_t train_seed = 0;
    bool train_seed_set = false;
    train->add_option("--config", train_config, "config file")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--seed", train_seed, "seed override")->each([&](const std::string&) {
        train_seed_set = true;
    });

    // fuse
    auto* fuse = app.add_subcommand("fuse", "fuse one visible/infrared pair");
    std::string fuse_ckpt, fuse_vis, fuse_ir, fuse_out;
    fuse->add_option("--checkpoint", fuse_ckpt, "trained checkpoint")->required();
    fuse->add_option("--vis", fuse_vis, "visible PPM")->required();
    fuse->add_option("--ir", fuse_ir, "infrared PGM")->required();
    fuse->add_option("--out", fuse_out, "output PPM")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "fusion-quality metrics over a directory");
    std::string eval_fused, eval_vis, eval_ir, eval_labels, eval_ckpt, eval_out;
    int eval_classes = 15;
    eval->add_option("--fused", eval_fused, "directory of fused PPMs")->required();
    eval->add_option("--vis", eval_vis, "directory of visible PPMs")->required();
    eval->add_option("--ir", eval_ir, "directory of infrared PGMs")->required();
    eval->add_option("--labels", eval_labels, "directory of label PGMs");
    eval->add_option("--seg-checkpoint", eval_ckpt, "checkpoint for segmentation scoring");
    eval->add_option("--classes", eval_classes, "class count for segmentation scoring");
    eval->add_option("--out", eval_out, "also write the report to this file");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "projection diagnostics over a short training");
    std::string diag_config, diag_dump;
    uint64_t diag_seed = 0;
    bool diag_seed_set = false;
    int diag_epochs = 0;
    diag->add_option("--config", diag_config, "config file")->required();
    diag->add_option("--seed", diag_seed, "seed override")->each([&](const std::string&) {
        diag_seed_set = true;
    });
    diag->add_option("--max-epochs", diag_epochs, "override max_epochs for the probe run");
    diag->add_option("--dump", diag_dump, "write per-step records to this TSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return run_synth(synth_out, synth_count, synth_seed, synth_size, synth_classes,
                             synth_noise);
        }
        if (train->parsed()) {
            return run_train(train_config,
                             train_seed_set ? std::optional<uint64_t>(train_seed) : std::nullopt,
                             train_resume.empty() ? std::nullopt
                                                  : std::optional<std::string>(train_resume));
        }
        if (fuse->parsed()) {
            run_fuse(fuse_ckpt, fuse_vis, fuse_ir, fuse_out);
            return 0;
        }
        if (eval->parsed()) {
            return run_eval(eval_fused, eval_vis, eval_ir, eval_labels, eval_ckpt, eval_classes,
                            eval_out);
        }
        if (diag->parsed()) {
            return run_diagnose(diag_config,
                                diag_seed_set ? std::optional<uint64_t>(diag_seed) : std::nullopt,
                                diag_epochs > 0 ? std::optional<int>(diag_epochs) : std::nullopt,
                                diag_dump);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const IoError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
