#pragma once

// Deterministic generator of paired visible/infrared scenes with pixel-exact
// segmentation ground truth. Visible images carry color and texture; the
// infrared channel carries intensity contrast, strongest for one designated
// "IR-salient" class whose visible luminance blends into the background.

#include <cstdint>
#include <string>
#include <vector>

#include "ssvif/tensor.hpp"

namespace ssvif {

struct SceneSpec {
    int width = 64;
    int height = 64;
    int n_classes = 4; // includes background class 0
    int objects_min = 2;
    int objects_max = 4;
    uint64_t seed = 7;
    double noise_std = 0.02;
};

struct Scene {
    Tensor vis;             // [3,H,W]
    Tensor ir;              // [1,H,W]
    std::vector<int> label; // H*W class indices
};

/// The class that is hard to see in the visible image but bright in infrared.
inline int ir_salient_class(int n_classes) { return n_classes - 1; }

/// Renders scene `index` of the stream defined by `spec`. Deterministic and
/// order-independent: the per-scene RNG derives from (seed, index).
Scene render_scene(const SceneSpec& spec, int index);

/// Writes `count` scenes under the dataset layout (vis/ ir/ labels/).
/// Ids are s0000, s0001, ...
void generate(const SceneSpec& spec, int count, const std::string& out_root);

} // namespace ssvif
