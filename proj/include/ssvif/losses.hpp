#pragma once

// Training losses: the four fusion sub-losses with their weighted sum, and
// the cross-segmentation-consistency loss built from confidence-selected
// pseudo-labels scored by a cross-entropy + Dice hybrid.

#include <array>
#include <cstdint>
#include <vector>

#include "ssvif/errors.hpp"
#include "ssvif/imageio.hpp"
#include "ssvif/tensor.hpp"

namespace ssvif {

template <class T>
struct SegPredT {
    TensorT<T> logits; // [n,H,W]
    TensorT<T> probs;  // softmax_channel(logits)
};

enum class CeNormalization { mean, sum };

struct LossOptions {
    double dice_eps = 1e-6;
    double ce_log_eps = 1e-12;
    CeNormalization ce_normalization = CeNormalization::mean;
};

// ---------------------------------------------------------------------------
// fusion losses (luminance / chroma domain)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void check_luminance_triplet(const TensorT<T>& f, const TensorT<T>& a, const TensorT<T>& b,
                             const char* op) {
    if (f.rank() != 3 || f.dim(0) != 1) {
        throw DimensionError(std::string(op) + ": expected [1,H,W] luminances, got " +
                             shape_str(f.shape()));
    }
    if (f.shape() != a.shape() || f.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(f.shape()) + " vs " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

} // namespace detail

/// Mean absolute deviation of the fused luminance from the per-pixel max of
/// the source luminances.
template <class T>
TensorT<T> intensity_loss(const TensorT<T>& fused_y, const TensorT<T>& ir_y,
                          const TensorT<T>& vis_y) {
    detail::check_luminance_triplet(fused_y, ir_y, vis_y, "intensity_loss");
    return mean(abs(sub(fused_y, maximum(ir_y, vis_y))));
}

/// Mean absolute deviation of the fused Sobel magnitude from the per-pixel
/// max of the source magnitudes.
template <class T>
TensorT<T> gradient_loss(const TensorT<T>& fused_y, const TensorT<T>& ir_y,
                         const TensorT<T>& vis_y) {
    detail::check_luminance_triplet(fused_y, ir_y, vis_y, "gradient_loss");
    return mean(abs(sub(sobel(fused_y), maximum(sobel(ir_y), sobel(vis_y)))));
}

namespace detail {

template <class T>
TensorT<T> gaussian_window_1d() {
    // 11 taps, sigma 1.5, normalized
    std::vector<T> w(11);
    double total = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        const double v = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        w[size_t(i)] = T(v);
        total += v;
    }
    for (auto& v : w) v = T(double(v) / total);
    return TensorT<T>::from_vector({1, 1, 1, 11}, std::move(w));
}

template <class T>
TensorT<T> gaussian_blur_valid(const TensorT<T>& x) {
    static const thread_local TensorT<T> row = gaussian_window_1d<T>();
    static const thread_local TensorT<T> col =
        TensorT<T>::from_vector({1, 1, 11, 1}, row.values());
    static const thread_local TensorT<T> zero_bias = TensorT<T>::zeros({1});
    return conv2d(conv2d(x, row, zero_bias, 1, 0), col, zero_bias, 1, 0);
}

} // namespace detail

/// Mean local SSIM between two [1,H,W] images in [0,1] over valid 11x11
/// Gaussian windows (sigma 1.5, C1=0.01^2, C2=0.03^2). Shared by the loss
/// and the evaluation metric.
template <class T>
TensorT<T> mean_ssim(const TensorT<T>& x, const TensorT<T>& y) {
    if (x.rank() != 3 || x.dim(0) != 1 || x.shape() != y.shape()) {
        throw DimensionError("mean_ssim: expected matching [1,H,W], got " + shape_str(x.shape()) +
                             " vs " + shape_str(y.shape()));
    }
    if (x.dim(1) < 11 || x.dim(2) < 11) {
        throw ContractError("mean_ssim: image smaller than the 11x11 window");
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    auto mu_x = detail::gaussian_blur_valid(x);
    auto mu_y = detail::gaussian_blur_valid(y);
    auto xx = detail::gaussian_blur_valid(mul(x, x));
    auto yy = detail::gaussian_blur_valid(mul(y, y));
    auto xy = detail::gaussian_blur_valid(mul(x, y));
    auto var_x = sub(xx, mul(mu_x, mu_x));
    auto var_y = sub(yy, mul(mu_y, mu_y));
    auto cov = sub(xy, mul(mu_x, mu_y));
    auto num = mul(scalar_add(scalar_mul(mul(mu_x, mu_y), 2.0), c1),
                   scalar_add(scalar_mul(cov, 2.0), c2));
    auto den = mul(scalar_add(add(mul(mu_x, mu_x), mul(mu_y, mu_y)), c1),
                   scalar_add(add(var_x, var_y), c2));
    return mean(div(num, den));
}

/// Mean over the two source images of (1 - mean local SSIM vs the fused one).
template <class T>
TensorT<T> ssim_loss(const TensorT<T>& fused_y, const TensorT<T>& ir_y, const TensorT<T>& vis_y) {
    detail::check_luminance_triplet(fused_y, ir_y, vis_y, "ssim_loss");
    auto s_ir = mean_ssim(fused_y, ir_y);
    auto s_vis = mean_ssim(fused_y, vis_y);
    return scalar_add(scalar_mul(add(s_ir, s_vis), -0.5), 1.0);
}

/// Mean over the Cb/Cr channels of the mean absolute difference between the
/// fused and visible chroma.
template <class T>
TensorT<T> color_loss(const TensorT<T>& fused_rgb, const TensorT<T>& vis_rgb) {
    if (fused_rgb.shape() != vis_rgb.shape()) {
        throw DimensionError("color_loss: shape mismatch " + shape_str(fused_rgb.shape()) + " vs " +
                             shape_str(vis_rgb.shape()));
    }
    auto f = rgb_to_ycbcr(fused_rgb);
    auto v = rgb_to_ycbcr(vis_rgb);
    auto d_cb = mean(abs(sub(channel_slice(f, 1), channel_slice(v, 1))));
    auto d_cr = mean(abs(sub(channel_slice(f, 2), channel_slice(v, 2))));
    return scalar_mul(add(d_cb, d_cr), 0.5);
}

template <class T>
struct FusionLossTerms {
    TensorT<T> l_int, l_grad, l_ssim, l_color, total;
};

/// Weighted fusion loss. Intensity/gradient/SSIM act on the BT.601 luminance,
/// the color term on the chroma channels.
template <class T>
FusionLossTerms<T> fusion_loss(const TensorT<T>& fused_rgb, const TensorT<T>& ir_rgb,
                               const TensorT<T>& vis_rgb, const std::array<double, 4>& lambda) {
    for (double l : lambda) {
        if (l < 0) throw ConfigError("fusion_loss: negative loss weight");
    }
    auto fy = luminance(fused_rgb);
    auto iy = luminance(ir_rgb);
    auto vy = luminance(vis_rgb);
    FusionLossTerms<T> terms;
    terms.l_int = intensity_loss(fy, iy, vy);
    terms.l_grad = gradient_loss(fy, iy, vy);
    terms.l_ssim = ssim_loss(fy, iy, vy);
    terms.l_color = color_loss(fused_rgb, vis_rgb);
    terms.total = add(add(scalar_mul(terms.l_int, lambda[0]), scalar_mul(terms.l_grad, lambda[1])),
                      add(scalar_mul(terms.l_ssim, lambda[2]), scalar_mul(terms.l_color, lambda[3])));
    return terms;
}

// ---------------------------------------------------------------------------
// pseudo-labels and the CSC loss
// ---------------------------------------------------------------------------

enum class PseudoSource : uint8_t { A, B };

template <class T>
struct PseudoLabelT {
    int n_classes = 0;
    int height = 0;
    int width = 0;
    std::vector<int> classes;          // H*W, argmax of the winning branch
    std::vector<T> confidence;         // H*W, max of the two branch maxima
    std::vector<PseudoSource> source;  // H*W
};

/// Per pixel, the branch with the strictly larger max probability provides
/// the argmax class; ties go to branch B. The result is a constant target:
/// no gradient flows through it.
template <class T>
PseudoLabelT<T> build_pseudo_label(const SegPredT<T>& pa, const SegPredT<T>& pb) {
    if (pa.probs.shape() != pb.probs.shape()) {
        throw DimensionError("build_pseudo_label: prediction shapes differ, " +
                             shape_str(pa.probs.shape()) + " vs " + shape_str(pb.probs.shape()));
    }
    const int n = pa.probs.dim(0);
    const int h = pa.probs.dim(1), w = pa.probs.dim(2);
    const int64_t hw = int64_t(h) * w;
    const T* a = pa.probs.values().data();
    const T* b = pb.probs.values().data();
    PseudoLabelT<T> out;
    out.n_classes = n;
    out.height = h;
    out.width = w;
    out.classes.resize(size_t(hw));
    out.confidence.resize(size_t(hw));
    out.source.resize(size_t(hw));
    for (int64_t p = 0; p < hw; ++p) {
        T max_a = a[p];
        int arg_a = 0;
        T max_b = b[p];
        int arg_b = 0;
        for (int c = 1; c < n; ++c) {
            const T va = a[c * hw + p];
            if (va > max_a) {
                max_a = va;
                arg_a = c;
            }
            const T vb = b[c * hw + p];
            if (vb > max_b) {
                max_b = vb;
                arg_b = c;
            }
        }
        if (max_a > max_b) {
            out.classes[size_t(p)] = arg_a;
            out.source[size_t(p)] = PseudoSource::A;
            out.confidence[size_t(p)] = max_a;
        } else {
            out.classes[size_t(p)] = arg_b;
            out.source[size_t(p)] = PseudoSource::B;
            out.confidence[size_t(p)] = max_b;
        }
    }
    return out;
}

template <class T>
struct HybridLossTerms {
    TensorT<T> l_hyb, l_ce, l_dice;
};

/// Cross-entropy plus Dice against a hard pseudo-label.
template <class T>
HybridLossTerms<T> hybrid_loss(const SegPredT<T>& pred, const PseudoLabelT<T>& target,
                               const LossOptions& opt = {}) {
    if (pred.probs.rank() != 3 || pred.probs.dim(0) != target.n_classes ||
        pred.probs.dim(1) != target.height || pred.probs.dim(2) != target.width) {
        throw DimensionError("hybrid_loss: prediction " + shape_str(pred.probs.shape()) +
                             " does not match target [" + std::to_string(target.n_classes) + "," +
                             std::to_string(target.height) + "," + std::to_string(target.width) +
                             "]");
    }
    const int n = target.n_classes;
    const int64_t hw = int64_t(target.height) * target.width;
    const double norm =
        opt.ce_normalization == CeNormalization::mean ? 1.0 / double(hw) : 1.0;

    HybridLossTerms<T> terms;
    terms.l_ce = ce_gather_loss(pred.probs, target.classes, opt.ce_log_eps, norm);

    // Dice over one-hot targets: per class, 2*intersection / (pred + target).
    std::vector<T> target_counts(size_t(n), T(0));
    for (int64_t p = 0; p < hw; ++p) target_counts[size_t(target.classes[size_t(p)])] += T(1);
    auto t_const = TensorT<T>::from_vector({n}, std::move(target_counts));
    auto inter = class_masked_sums(pred.probs, target.classes);
    auto pred_sums = sum(pred.probs, {1, 2});
    auto denom = scalar_add(add(pred_sums, t_const), opt.dice_eps);
    auto dice_mean = scalar_mul(sum(div(scalar_mul(inter, 2.0), denom)), 1.0 / double(n));
    terms.l_dice = scalar_add(scalar_mul(dice_mean, -1.0), 1.0);

    terms.l_hyb = add(terms.l_ce, terms.l_dice);
    return terms;
}

template <class T>
struct CscLossTerms {
    TensorT<T> l_csc, l_hyb_a, l_hyb_b, l_ce_a, l_dice_a, l_ce_b, l_dice_b;
    PseudoLabelT<T> pseudo;
};

/// Average of the two hybrid losses against the shared pseudo-label; the
/// gradient reaches both branches (and everything upstream of them).
template <class T>
CscLossTerms<T> csc_loss(const SegPredT<T>& pa, const SegPredT<T>& pb,
                         const LossOptions& opt = {}) {
    CscLossTerms<T> terms;
    terms.pseudo = build_pseudo_label(pa, pb);
    auto ha = hybrid_loss(pa, terms.pseudo, opt);
    auto hb = hybrid_loss(pb, terms.pseudo, opt);
    terms.l_hyb_a = ha.l_hyb;
    terms.l_ce_a = ha.l_ce;
    terms.l_dice_a = ha.l_dice;
    terms.l_hyb_b = hb.l_hyb;
    terms.l_ce_b = hb.l_ce;
    terms.l_dice_b = hb.l_dice;
    terms.l_csc = scalar_mul(add(ha.l_hyb, hb.l_hyb), 0.5);
    return terms;
}

} // namespace ssvif
