#pragma once

// The four tiny networks: fusion backbone B, image decoder D, segmentation
// head H, segmentation model S. All parameters live in a ParamRegistry under
// their group names; forward passes build autodiff graphs over those leaves.

#include <cstdint>

#include "ssvif/losses.hpp"
#include "ssvif/registry.hpp"
#include "ssvif/tensor.hpp"

namespace ssvif {

using SegPrediction = SegPredT<float>;

struct FusedOutputs {
    Tensor features; // [32,H,W]
    Tensor fused;    // [3,H,W] in (0,1)
};

constexpr int kFeatureChannels = 32;

/// Backbone + decoder; F(ir,vis) = D(B(ir,vis)).
class FusionModel {
public:
    explicit FusionModel(ParamRegistry& reg);

    Tensor backbone_forward(const Tensor& ir, const Tensor& vis) const;
    Tensor decoder_forward(const Tensor& features) const;
    FusedOutputs forward(const Tensor& ir, const Tensor& vis) const;

private:
    // per-modality stems (3->16->16), fusion convs (32->32->32)
    Tensor ir_w1_, ir_b1_, ir_w2_, ir_b2_;
    Tensor vis_w1_, vis_b1_, vis_w2_, vis_b2_;
    Tensor fuse_w1_, fuse_b1_, fuse_w2_, fuse_b2_;
    // decoder (32->16->3 + sigmoid)
    Tensor dec_w1_, dec_b1_, dec_w2_, dec_b2_;
};

/// Feature-level segmentation head: 3x3 (32->32), 3x3 (32->32), 1x1 (32->n).
class SegHead {
public:
    SegHead(ParamRegistry& reg, int n_classes);
    SegPrediction forward(const Tensor& features) const;
    int n_classes() const { return n_classes_; }

private:
    int n_classes_;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Pixel-level segmentation model: tiny encoder-decoder over the fused image.
/// Input spatial extents must be divisible by 4.
class SegModel {
public:
    SegModel(ParamRegistry& reg, int n_classes);
    SegPrediction forward(const Tensor& fused) const;
    int n_classes() const { return n_classes_; }

private:
    int n_classes_;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_, w4_, b4_, w5_, b5_, w6_, b6_;
};

/// He-uniform fan-in init for conv weights, zero biases; deterministic.
void init_params(ParamRegistry& reg, uint64_t seed);

/// Counts SegHead/SegModel constructions in this process. The inference path
/// must never construct them; tests assert on the counter.
int64_t seg_branch_constructions();

} // namespace ssvif
