#include "ssvif/pipeline.hpp"

#include <algorithm>

#include "ssvif/imageio.hpp"
#include "ssvif/models.hpp"
#include "ssvif/registry.hpp"

namespace ssvif {

namespace {

Tensor crop_back(const Tensor& t, int h, int w) {
    if (t.dim(1) == h && t.dim(2) == w) return t;
    const int c = t.dim(0), hp = t.dim(1), wp = t.dim(2);
    std::vector<float> out(size_t(c) * h * w);
    const auto& v = t.values();
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            const float* src = v.data() + (int64_t(ch) * hp + y) * wp;
            std::copy(src, src + w, out.begin() + (int64_t(ch) * h + y) * w);
        }
    }
    return Tensor::from_vector({c, h, w}, std::move(out));
}

std::vector<int> argmax_channel(const Tensor& probs) {
    const int n = probs.dim(0);
    const int64_t hw = int64_t(probs.dim(1)) * probs.dim(2);
    const auto& v = probs.values();
    std::vector<int> out(static_cast<size_t>(hw));
    for (int64_t p = 0; p < hw; ++p) {
        int arg = 0;
        float best = v[size_t(p)];
        for (int c = 1; c < n; ++c) {
            if (v[size_t(c * hw + p)] > best) {
                best = v[size_t(c * hw + p)];
                arg = c;
            }
        }
        out[size_t(p)] = arg;
    }
    return out;
}

} // namespace

Tensor reflect_pad_to_multiple(const Tensor& img, int multiple) {
    if (img.rank() != 3) throw DimensionError("reflect_pad: expected [C,H,W]");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int hp = (h + multiple - 1) / multiple * multiple;
    const int wp = (w + multiple - 1) / multiple * multiple;
    if (hp == h && wp == w) return img;
    if (hp - h >= h || wp - w >= w) {
        throw ContractError("reflect_pad: image too small to pad to a multiple of " +
                            std::to_string(multiple));
    }
    std::vector<float> out(size_t(c) * hp * wp);
    const auto& v = img.values();
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < hp; ++y) {
            const int sy = y < h ? y : 2 * h - y - 2;
            for (int x = 0; x < wp; ++x) {
                const int sx = x < w ? x : 2 * w - x - 2;
                out[size_t((int64_t(ch) * hp + y) * wp + x)] =
                    v[size_t((int64_t(ch) * h + sy) * w + sx)];
            }
        }
    }
    return Tensor::from_vector({c, hp, wp}, std::move(out));
}

Tensor fuse_image(const Checkpoint& ckpt, const Tensor& vis, const Tensor& ir) {
    if (vis.shape() != ir.shape()) {
        throw DimensionError("fuse: vis " + shape_str(vis.shape()) + " vs ir " +
                             shape_str(ir.shape()));
    }
    NoGradGuard ng;
    ParamRegistry reg;
    FusionModel model(reg); // no segmentation branches on the inference path
    restore_registry_tensors(ckpt, reg);
    const int h = vis.dim(1), w = vis.dim(2);
    Tensor vis_p = reflect_pad_to_multiple(vis, 4);
    Tensor ir_p = reflect_pad_to_multiple(ir, 4);
    Tensor fused = model.forward(ir_p, vis_p).fused;
    return crop_back(fused, h, w);
}

void run_fuse(const std::string& checkpoint_path, const std::string& vis_path,
              const std::string& ir_path, const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint_file(checkpoint_path);
    Tensor vis = load_ppm(vis_path);
    Tensor ir1 = load_pgm(ir_path);
    Tensor ir = concat_channels(ir1, concat_channels(ir1, ir1)).detach();
    save_ppm(fuse_image(ckpt, vis, ir), out_path);
}

std::vector<int> predict_seg_model(const Checkpoint& ckpt, int n_classes, const Tensor& rgb) {
    NoGradGuard ng;
    ParamRegistry reg;
    FusionModel fusion(reg); // checkpoint layout includes the fusion model
    SegModel seg(reg, n_classes);
    restore_registry_tensors(ckpt, reg);
    const int h = rgb.dim(1), w = rgb.dim(2);
    Tensor padded = reflect_pad_to_multiple(rgb, 4);
    SegPrediction pred = seg.forward(padded);
    Tensor probs = crop_back(pred.probs, h, w);
    return argmax_channel(probs);
}

std::vector<int> predict_seg_head(const Checkpoint& ckpt, int n_classes, const Tensor& vis,
                                  const Tensor& ir) {
    NoGradGuard ng;
    ParamRegistry reg;
    FusionModel fusion(reg);
    SegHead head(reg, n_classes);
    restore_registry_tensors(ckpt, reg);
    const int h = vis.dim(1), w = vis.dim(2);
    Tensor vis_p = reflect_pad_to_multiple(vis, 4);
    Tensor ir_p = reflect_pad_to_multiple(ir, 4);
    Tensor feats = fusion.backbone_forward(ir_p, vis_p);
    SegPrediction pred = head.forward(feats);
    Tensor probs = crop_back(pred.probs, h, w);
    return argmax_channel(probs);
}

} // namespace ssvif
