#pragma once

// Inference and evaluation entry points shared by the CLI and the test
// suites. The fuse path constructs the fusion model only; the segmentation
// branches exist solely during training.

#include <string>
#include <vector>

#include "ssvif/checkpoint.hpp"
#include "ssvif/tensor.hpp"

namespace ssvif {

/// Reflect-pads H and W up to multiples of `multiple`, forwards, crops back.
Tensor reflect_pad_to_multiple(const Tensor& img, int multiple);

/// Runs the fusion model from a checkpoint at full resolution.
/// vis [3,H,W], ir [3,H,W] (replicated); deterministic, no RNG.
Tensor fuse_image(const Checkpoint& ckpt, const Tensor& vis, const Tensor& ir);

/// CLI fuse: load vis PPM + ir PGM, write the fused PPM.
void run_fuse(const std::string& checkpoint_path, const std::string& vis_path,
              const std::string& ir_path, const std::string& out_path);

/// Argmax class map of the pixel-level segmentation model applied to an RGB
/// image (padded to conv-valid extents and cropped back).
std::vector<int> predict_seg_model(const Checkpoint& ckpt, int n_classes, const Tensor& rgb);

/// Argmax class map of the feature-level head on a visible/infrared pair.
std::vector<int> predict_seg_head(const Checkpoint& ckpt, int n_classes, const Tensor& vis,
                                  const Tensor& ir);

} // namespace ssvif
