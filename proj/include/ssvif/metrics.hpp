#pragma once

// Evaluation-only fusion-quality and segmentation metrics: EN, MI, SSIM,
// Q_abf, Delta-E (CIEDE2000) and mIoU. All computed in double precision.

#include <cstdint>
#include <vector>

#include "ssvif/tensor.hpp"

namespace ssvif {

/// BT.601 luminance quantized to 8 bits (histogram-based metrics).
std::vector<uint8_t> quantize_luminance_u8(const Tensor& rgb);

/// Continuous BT.601 luminance plane (structure-based metrics).
std::vector<double> luminance_plane(const Tensor& rgb);

/// 256-bin Shannon entropy, log base 2, zero bins skipped.
double entropy(const std::vector<uint8_t>& gray);

/// MI(fused, a) + MI(fused, b) over 256-bin joint histograms, log base 2.
double mutual_information(const std::vector<uint8_t>& fused, const std::vector<uint8_t>& src_a,
                          const std::vector<uint8_t>& src_b);
double mutual_information_pair(const std::vector<uint8_t>& x, const std::vector<uint8_t>& y);

/// Mean local SSIM over valid 11x11 Gaussian windows (the losses kernel).
double ssim_metric(const std::vector<double>& fused_y, const std::vector<double>& ref_y, int h,
                   int w);

/// Xydeas-Petrovic edge-transfer measure with the canonical constants.
double qabf(const std::vector<double>& fused_y, const std::vector<double>& ir_y,
            const std::vector<double>& vis_y, int h, int w);

struct Lab {
    double l, a, b;
};

Lab srgb_to_lab(double r, double g, double b);
double ciede2000(const Lab& c1, const Lab& c2);

/// Mean CIEDE2000 between fused and visible pixels (sRGB, D65).
double delta_e(const Tensor& fused_rgb, const Tensor& vis_rgb);

struct IouReport {
    std::vector<int64_t> confusion;     // n x n, row = ground truth class
    std::vector<double> per_class_iou;  // NaN for classes absent from both
    double miou = 0.0;
    int n_classes = 0;
};

/// Confusion-matrix IoU; classes absent from both pred and gt are excluded
/// from the mean.
IouReport miou(const std::vector<int>& pred, const std::vector<int>& gt, int n_classes);

struct FusionMetrics {
    double en = 0.0;
    double mi = 0.0;
    double ssim = 0.0; // mean of SSIM against the two sources
    double qabf = 0.0;
    double delta_e = 0.0;
};

FusionMetrics evaluate_fusion(const Tensor& fused, const Tensor& vis, const Tensor& ir);

} // namespace ssvif
