#include "ssvif/models.hpp"

#include <atomic>
#include <cmath>

#include "ssvif/rng.hpp"

namespace ssvif {

namespace {

std::atomic<int64_t> g_seg_constructions{0};

Tensor conv_relu(const Tensor& x, const Tensor& w, const Tensor& b) {
    return relu(conv2d(x, w, b, 1, (w.dim(2) - 1) / 2));
}

void check_rgb_input(const Tensor& t, const char* who) {
    if (t.rank() != 3 || t.dim(0) != 3) {
        throw DimensionError(std::string(who) + ": expected [3,H,W], got " + shape_str(t.shape()));
    }
}

} // namespace

FusionModel::FusionModel(ParamRegistry& reg) {
    auto add = [&](const char* name, Shape s, ParamGroup g) { return reg.add(g, name, s); };
    const auto bb = ParamGroup::fusion_backbone;
    ir_w1_ = add("stem_ir.conv1.weight", {16, 3, 3, 3}, bb);
    ir_b1_ = add("stem_ir.conv1.bias", {16}, bb);
    ir_w2_ = add("stem_ir.conv2.weight", {16, 16, 3, 3}, bb);
    ir_b2_ = add("stem_ir.conv2.bias", {16}, bb);
    vis_w1_ = add("stem_vis.conv1.weight", {16, 3, 3, 3}, bb);
    vis_b1_ = add("stem_vis.conv1.bias", {16}, bb);
    vis_w2_ = add("stem_vis.conv2.weight", {16, 16, 3, 3}, bb);
    vis_b2_ = add("stem_vis.conv2.bias", {16}, bb);
    fuse_w1_ = add("fuse.conv1.weight", {32, 32, 3, 3}, bb);
    fuse_b1_ = add("fuse.conv1.bias", {32}, bb);
    fuse_w2_ = add("fuse.conv2.weight", {32, 32, 3, 3}, bb);
    fuse_b2_ = add("fuse.conv2.bias", {32}, bb);

    const auto dec = ParamGroup::fusion_decoder;
    dec_w1_ = add("conv1.weight", {16, 32, 3, 3}, dec);
    dec_b1_ = add("conv1.bias", {16}, dec);
    dec_w2_ = add("conv2.weight", {3, 16, 3, 3}, dec);
    dec_b2_ = add("conv2.bias", {3}, dec);
}

Tensor FusionModel::backbone_forward(const Tensor& ir, const Tensor& vis) const {
    check_rgb_input(ir, "backbone");
    check_rgb_input(vis, "backbone");
    if (ir.shape() != vis.shape()) {
        throw DimensionError("backbone: ir " + shape_str(ir.shape()) + " vs vis " +
                             shape_str(vis.shape()));
    }
    auto fi = conv_relu(conv_relu(ir, ir_w1_, ir_b1_), ir_w2_, ir_b2_);
    auto fv = conv_relu(conv_relu(vis, vis_w1_, vis_b1_), vis_w2_, vis_b2_);
    auto cat = concat_channels(fi, fv);
    return conv_relu(conv_relu(cat, fuse_w1_, fuse_b1_), fuse_w2_, fuse_b2_);
}

Tensor FusionModel::decoder_forward(const Tensor& features) const {
    if (features.rank() != 3 || features.dim(0) != kFeatureChannels) {
        throw DimensionError("decoder: expected [" + std::to_string(kFeatureChannels) +
                             ",H,W], got " + shape_str(features.shape()));
    }
    auto h = conv_relu(features, dec_w1_, dec_b1_);
    return sigmoid(conv2d(h, dec_w2_, dec_b2_, 1, 1));
}

FusedOutputs FusionModel::forward(const Tensor& ir, const Tensor& vis) const {
    FusedOutputs out;
    out.features = backbone_forward(ir, vis);
    out.fused = decoder_forward(out.features);
    return out;
}

SegHead::SegHead(ParamRegistry& reg, int n_classes) : n_classes_(n_classes) {
    if (n_classes < 2) throw ContractError("seg_head: need at least 2 classes");
    ++g_seg_constructions;
    const auto g = ParamGroup::seg_head;
    w1_ = reg.add(g, "conv1.weight", {32, kFeatureChannels, 3, 3});
    b1_ = reg.add(g, "conv1.bias", {32});
    w2_ = reg.add(g, "conv2.weight", {32, 32, 3, 3});
    b2_ = reg.add(g, "conv2.bias", {32});
    w3_ = reg.add(g, "classifier.weight", {n_classes, 32, 1, 1});
    b3_ = reg.add(g, "classifier.bias", {n_classes});
}

SegPrediction SegHead::forward(const Tensor& features) const {
    if (features.rank() != 3 || features.dim(0) != kFeatureChannels) {
        throw DimensionError("seg_head: expected [" + std::to_string(kFeatureChannels) +
                             ",H,W], got " + shape_str(features.shape()));
    }
    auto h = conv_relu(conv_relu(features, w1_, b1_), w2_, b2_);
    SegPrediction pred;
    pred.logits = conv2d(h, w3_, b3_, 1, 0);
    pred.probs = softmax_channel(pred.logits);
    return pred;
}

SegModel::SegModel(ParamRegistry& reg, int n_classes) : n_classes_(n_classes) {
    if (n_classes < 2) throw ContractError("seg_model: need at least 2 classes");
    ++g_seg_constructions;
    const auto g = ParamGroup::seg_model;
    w1_ = reg.add(g, "enc1.weight", {16, 3, 3, 3});
    b1_ = reg.add(g, "enc1.bias", {16});
    w2_ = reg.add(g, "enc2.weight", {32, 16, 3, 3});
    b2_ = reg.add(g, "enc2.bias", {32});
    w3_ = reg.add(g, "mid.weight", {32, 32, 3, 3});
    b3_ = reg.add(g, "mid.bias", {32});
    w4_ = reg.add(g, "dec1.weight", {16, 32, 3, 3});
    b4_ = reg.add(g, "dec1.bias", {16});
    w5_ = reg.add(g, "dec2.weight", {16, 16, 3, 3});
    b5_ = reg.add(g, "dec2.bias", {16});
    w6_ = reg.add(g, "classifier.weight", {n_classes, 16, 1, 1});
    b6_ = reg.add(g, "classifier.bias", {n_classes});
}

SegPrediction SegModel::forward(const Tensor& fused) const {
    check_rgb_input(fused, "seg_model");
    if (fused.dim(1) % 4 != 0 || fused.dim(2) % 4 != 0) {
        throw DimensionError("seg_model: spatial extents must be divisible by 4, got " +
                             shape_str(fused.shape()));
    }
    auto e1 = conv_relu(fused, w1_, b1_);
    auto e2 = conv_relu(avgpool2x(e1), w2_, b2_);
    auto m = conv_relu(avgpool2x(e2), w3_, b3_);
    auto d1 = conv_relu(upsample_nearest2x(m), w4_, b4_);
    auto d2 = conv_relu(upsample_nearest2x(d1), w5_, b5_);
    SegPrediction pred;
    pred.logits = conv2d(d2, w6_, b6_, 1, 0);
    pred.probs = softmax_channel(pred.logits);
    return pred;
}

void init_params(ParamRegistry& reg, uint64_t seed) {
    Rng rng(mix64(seed, 0x1217ULL)); // init stream tag
    for (const auto& entry : reg.entries()) {
        Tensor t = entry.tensor;
        auto& v = t.mutable_values();
        if (t.shape().size() == 4) {
            const int fan_in = t.dim(1) * t.dim(2) * t.dim(3);
            const double bound = std::sqrt(6.0 / double(fan_in));
            for (auto& x : v) x = float(rng.uniform(-bound, bound));
        } else {
            for (auto& x : v) x = 0.0f; // biases
        }
    }
}

int64_t seg_branch_constructions() { return g_seg_constructions.load(); }

} // namespace ssvif
